"""Two-sided market model: instances, matchings, random generation, JSON I/O.

A market has a left group and a right group of agents.  Every agent carries an
integer valuation over the opposite side and a degree cap limiting how many
opposite agents it can be matched with.  Valuations are non-negative integers
throughout so that all downstream fairness arithmetic is exact.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Literal, Sequence

from .errors import (
    DegreeExceedsSide,
    DimensionMismatch,
    NegativeValue,
    SchemaError,
)

Side = Literal["left", "right"]

SIDES: tuple[Side, Side] = ("left", "right")


def other_side(side: Side) -> Side:
    return "right" if side == "left" else "left"


def _freeze_matrix(rows: Iterable[Sequence[int]]) -> tuple[tuple[int, ...], ...]:
    return tuple(tuple(row) for row in rows)


def subseed(*parts) -> int:
    """Derive a stable 64-bit seed from arbitrary labelled parts.

    Uses blake2b rather than ``hash()`` so results do not depend on
    PYTHONHASHSEED and are reproducible across runs and platforms.
    """
    blob = "\x1f".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(blob, digest_size=8).digest(), "big")


@dataclass(frozen=True)
class Instance:
    """One market: group sizes, degree caps, and both valuation matrices.

    ``val_left[i][j]`` is left agent i's value for right agent j;
    ``val_right[j][i]`` is right agent j's value for left agent i.
    Instances are immutable and hashable; construct with plain data and run
    :func:`validate_instance` (or use :func:`make_instance`).
    """

    n_left: int
    n_right: int
    deg_left: tuple[int, ...]
    deg_right: tuple[int, ...]
    val_left: tuple[tuple[int, ...], ...]
    val_right: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "deg_left", tuple(self.deg_left))
        object.__setattr__(self, "deg_right", tuple(self.deg_right))
        object.__setattr__(self, "val_left", _freeze_matrix(self.val_left))
        object.__setattr__(self, "val_right", _freeze_matrix(self.val_right))

    def n(self, side: Side) -> int:
        return self.n_left if side == "left" else self.n_right

    def deg(self, side: Side) -> tuple[int, ...]:
        return self.deg_left if side == "left" else self.deg_right

    def vals(self, side: Side) -> tuple[tuple[int, ...], ...]:
        """Valuation rows of the given side's agents (over the opposite side)."""
        return self.val_left if side == "left" else self.val_right

    def total_capacity(self, side: Side) -> int:
        return sum(self.deg(side))

    def completion_target(self) -> int:
        """Number of edges in any complete matching."""
        return min(self.total_capacity("left"), self.total_capacity("right"))


def _expect_int(value, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise DimensionMismatch(f"{what} must be an integer, got {value!r}")
    return value


def validate_instance(instance: Instance) -> Instance:
    """Return ``instance`` if every model invariant holds, else raise.

    Checks run in a fixed order (sizes, vector lengths, matrix shapes,
    signs, degree caps) so the first violated invariant is reported
    deterministically.
    """
    n_l = _expect_int(instance.n_left, "n_left")
    n_r = _expect_int(instance.n_right, "n_right")
    if n_l < 1 or n_r < 1:
        raise DimensionMismatch(f"group sizes must be positive, got {n_l}x{n_r}")
    for name, vec, expect in (
        ("deg_left", instance.deg_left, n_l),
        ("deg_right", instance.deg_right, n_r),
    ):
        if len(vec) != expect:
            raise DimensionMismatch(f"{name} has length {len(vec)}, expected {expect}")
    for name, mat, rows, cols in (
        ("val_left", instance.val_left, n_l, n_r),
        ("val_right", instance.val_right, n_r, n_l),
    ):
        if len(mat) != rows:
            raise DimensionMismatch(f"{name} has {len(mat)} rows, expected {rows}")
        for idx, row in enumerate(mat):
            if len(row) != cols:
                raise DimensionMismatch(
                    f"{name}[{idx}] has length {len(row)}, expected {cols}"
                )
    for name, vec in (("deg_left", instance.deg_left), ("deg_right", instance.deg_right)):
        for idx, d in enumerate(vec):
            _expect_int(d, f"{name}[{idx}]")
            if d < 0:
                raise NegativeValue(f"{name}[{idx}] is negative: {d}")
    for name, mat in (("val_left", instance.val_left), ("val_right", instance.val_right)):
        for idx, row in enumerate(mat):
            for jdx, v in enumerate(row):
                _expect_int(v, f"{name}[{idx}][{jdx}]")
                if v < 0:
                    raise NegativeValue(f"{name}[{idx}][{jdx}] is negative: {v}")
    for i, d in enumerate(instance.deg_left):
        if d > n_r:
            raise DegreeExceedsSide(f"deg_left[{i}]={d} exceeds n_right={n_r}")
    for j, d in enumerate(instance.deg_right):
        if d > n_l:
            raise DegreeExceedsSide(f"deg_right[{j}]={d} exceeds n_left={n_l}")
    return instance


def make_instance(
    n_left: int,
    n_right: int,
    deg_left: int | Sequence[int],
    deg_right: int | Sequence[int],
    val_left: Sequence[Sequence[int]],
    val_right: Sequence[Sequence[int]],
) -> Instance:
    """Build and validate an instance; integer degree args are broadcast."""
    if isinstance(deg_left, int):
        deg_left = (deg_left,) * n_left
    if isinstance(deg_right, int):
        deg_right = (deg_right,) * n_right
    return validate_instance(
        Instance(n_left, n_right, tuple(deg_left), tuple(deg_right),
                 _freeze_matrix(val_left), _freeze_matrix(val_right))
    )


# ---------------------------------------------------------------------------
# Ordinal preferences


@dataclass(frozen=True)
class PreferenceProfile:
    """Per-agent strict rankings of the opposite side, best first.

    ``rankings[a][p]`` is the opposite agent at position p of agent a's
    ranking; ``positions[a][o]`` is the inverse map.
    """

    rankings: tuple[tuple[int, ...], ...]
    positions: tuple[tuple[int, ...], ...]

    def ranking(self, agent: int) -> tuple[int, ...]:
        return self.rankings[agent]

    def position(self, agent: int, other: int) -> int:
        return self.positions[agent][other]


def derive_ordinal(instance: Instance, side: Side) -> PreferenceProfile:
    """Rankings consistent with the side's valuations.

    Sorts by descending value; equal values are broken by ascending index of
    the opposite-side agent, so the output is deterministic.
    """
    rankings = []
    positions = []
    for row in instance.vals(side):
        order = tuple(sorted(range(len(row)), key=lambda j: (-row[j], j)))
        pos = [0] * len(row)
        for p, j in enumerate(order):
            pos[j] = p
        rankings.append(order)
        positions.append(tuple(pos))
    return PreferenceProfile(tuple(rankings), tuple(positions))


# ---------------------------------------------------------------------------
# Matchings


@dataclass(frozen=True)
class Matching:
    """A binary incidence structure between the two sides.

    ``matrix[i][j] == 1`` iff left agent i and right agent j are matched.
    Bundle views are derived from the matrix so they can never disagree
    with it.
    """

    n_left: int
    n_right: int
    matrix: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "matrix", _freeze_matrix(self.matrix))
        if len(self.matrix) != self.n_left:
            raise DimensionMismatch(
                f"matching has {len(self.matrix)} rows, expected {self.n_left}"
            )
        for i, row in enumerate(self.matrix):
            if len(row) != self.n_right:
                raise DimensionMismatch(
                    f"matching row {i} has length {len(row)}, expected {self.n_right}"
                )
            for v in row:
                if v not in (0, 1):
                    raise ValueError(f"matching entries must be 0/1, got {v!r}")

    @classmethod
    def empty(cls, n_left: int, n_right: int) -> "Matching":
        return cls(n_left, n_right, tuple((0,) * n_right for _ in range(n_left)))

    @classmethod
    def from_edges(cls, n_left: int, n_right: int,
                   edges: Iterable[tuple[int, int]]) -> "Matching":
        rows = [[0] * n_right for _ in range(n_left)]
        for i, j in edges:
            if not (0 <= i < n_left and 0 <= j < n_right):
                raise DimensionMismatch(f"edge ({i},{j}) out of range")
            rows[i][j] = 1
        return cls(n_left, n_right, _freeze_matrix(rows))

    @classmethod
    def from_left_bundles(cls, n_left: int, n_right: int,
                          bundles: Sequence[Iterable[int]]) -> "Matching":
        return cls.from_edges(
            n_left, n_right, ((i, j) for i, b in enumerate(bundles) for j in b)
        )

    @classmethod
    def from_right_bundles(cls, n_left: int, n_right: int,
                           bundles: Sequence[Iterable[int]]) -> "Matching":
        return cls.from_edges(
            n_left, n_right, ((i, j) for j, b in enumerate(bundles) for i in b)
        )

    @cached_property
    def left_bundles(self) -> tuple[tuple[int, ...], ...]:
        return tuple(
            tuple(j for j in range(self.n_right) if row[j]) for row in self.matrix
        )

    @cached_property
    def right_bundles(self) -> tuple[tuple[int, ...], ...]:
        return tuple(
            tuple(i for i in range(self.n_left) if self.matrix[i][j])
            for j in range(self.n_right)
        )

    def bundles(self, side: Side) -> tuple[tuple[int, ...], ...]:
        return self.left_bundles if side == "left" else self.right_bundles

    def bundle_left(self, i: int) -> tuple[int, ...]:
        return self.left_bundles[i]

    def bundle_right(self, j: int) -> tuple[int, ...]:
        return self.right_bundles[j]

    def edges(self) -> tuple[tuple[int, int], ...]:
        return tuple(
            (i, j)
            for i in range(self.n_left)
            for j in range(self.n_right)
            if self.matrix[i][j]
        )

    def total_matched(self) -> int:
        return sum(sum(row) for row in self.matrix)

    def add_edge(self, i: int, j: int) -> "Matching":
        rows = [list(row) for row in self.matrix]
        rows[i][j] = 1
        return Matching(self.n_left, self.n_right, _freeze_matrix(rows))

    def remove_edge(self, i: int, j: int) -> "Matching":
        rows = [list(row) for row in self.matrix]
        rows[i][j] = 0
        return Matching(self.n_left, self.n_right, _freeze_matrix(rows))

    def transpose(self) -> "Matching":
        return Matching(
            self.n_right,
            self.n_left,
            tuple(tuple(self.matrix[i][j] for i in range(self.n_left))
                  for j in range(self.n_right)),
        )


@dataclass(frozen=True)
class MatchingStatus:
    valid: bool
    complete: bool


def matching_status(instance: Instance, matching: Matching) -> MatchingStatus:
    """Degree-cap validity and completeness of a matching for this market."""
    if (matching.n_left, matching.n_right) != (instance.n_left, instance.n_right):
        raise DimensionMismatch(
            f"matching is {matching.n_left}x{matching.n_right}, "
            f"instance is {instance.n_left}x{instance.n_right}"
        )
    valid = all(
        len(matching.bundle_left(i)) <= instance.deg_left[i]
        for i in range(instance.n_left)
    ) and all(
        len(matching.bundle_right(j)) <= instance.deg_right[j]
        for j in range(instance.n_right)
    )
    complete = matching.total_matched() == instance.completion_target()
    return MatchingStatus(valid=valid, complete=complete)


# ---------------------------------------------------------------------------
# Random generation


@dataclass(frozen=True)
class InstanceGenConfig:
    """Parameters for the impartial-culture style generator.

    ``pct_identical_*`` is the percentage of that side's agents sharing the
    common baseline row; the remaining (highest-indexed) agents get
    independent uniform rows.
    """

    n_left: int
    n_right: int
    deg_left: int
    deg_right: int
    pct_identical_left: int = 100
    pct_identical_right: int = 100
    value_max: int = 20
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("pct_identical_left", "pct_identical_right"):
            pct = getattr(self, name)
            if not 0 <= pct <= 100:
                raise ValueError(f"{name} must be in [0, 100], got {pct}")
        if self.value_max < 0:
            raise ValueError(f"value_max must be >= 0, got {self.value_max}")


def _uniform_row(rng: random.Random, length: int, value_max: int) -> tuple[int, ...]:
    return tuple(rng.randint(0, value_max) for _ in range(length))


def generate_instance(cfg: InstanceGenConfig) -> Instance:
    """Draw a random instance, deterministically in ``cfg.rng_seed``.

    Each side starts from one shared baseline row; the last
    ``ceil((100 - pct) * n / 100)`` agents of the side are replaced with
    independent rows.  Every row has its own derived seed, so instances at
    different ``pct`` values (same seed) are nested: agents heterogeneous at
    a higher pct keep the identical rows they had at a lower one.
    """
    seed = cfg.rng_seed
    base_left = _uniform_row(random.Random(subseed(seed, "base", "left")),
                             cfg.n_right, cfg.value_max)
    base_right = _uniform_row(random.Random(subseed(seed, "base", "right")),
                              cfg.n_left, cfg.value_max)

    def side_rows(n, pct, base, row_len, tag):
        n_hetero = math.ceil((100 - pct) * n / 100)
        rows = []
        for a in range(n):
            if a >= n - n_hetero:
                rng = random.Random(subseed(seed, "row", tag, a))
                rows.append(_uniform_row(rng, row_len, cfg.value_max))
            else:
                rows.append(base)
        return rows

    return make_instance(
        cfg.n_left,
        cfg.n_right,
        cfg.deg_left,
        cfg.deg_right,
        side_rows(cfg.n_left, cfg.pct_identical_left, base_left, cfg.n_right, "left"),
        side_rows(cfg.n_right, cfg.pct_identical_right, base_right, cfg.n_left, "right"),
    )


# ---------------------------------------------------------------------------
# JSON serialization

_INSTANCE_KEYS = ("n_left", "n_right", "deg_left", "deg_right", "val_left", "val_right")


def _schema_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{path}: expected an integer, got {value!r}")
    return value


def _schema_int_list(value, path: str) -> list[int]:
    if not isinstance(value, list):
        raise SchemaError(f"{path}: expected an array, got {value!r}")
    return [_schema_int(v, f"{path}[{k}]") for k, v in enumerate(value)]


def parse_instance(text: str) -> Instance:
    """Parse the canonical JSON instance format.

    Raises ``json.JSONDecodeError`` for malformed JSON, :class:`SchemaError`
    (with a field path) for structural problems, and the usual validation
    errors for semantic ones.
    """
    data = json.loads(text)
    if not isinstance(data, dict):
        raise SchemaError("$: expected a JSON object")
    for key in _INSTANCE_KEYS:
        if key not in data:
            raise SchemaError(f"$.{key}: missing required key")
    for key in data:
        if key not in _INSTANCE_KEYS:
            raise SchemaError(f"$.{key}: unknown key")
    n_left = _schema_int(data["n_left"], "$.n_left")
    n_right = _schema_int(data["n_right"], "$.n_right")
    deg_left = _schema_int_list(data["deg_left"], "$.deg_left")
    deg_right = _schema_int_list(data["deg_right"], "$.deg_right")
    mats = {}
    for key in ("val_left", "val_right"):
        raw = data[key]
        if not isinstance(raw, list):
            raise SchemaError(f"$.{key}: expected an array of arrays")
        mats[key] = [_schema_int_list(row, f"$.{key}[{r}]") for r, row in enumerate(raw)]
    return validate_instance(
        Instance(n_left, n_right, tuple(deg_left), tuple(deg_right),
                 _freeze_matrix(mats["val_left"]), _freeze_matrix(mats["val_right"]))
    )


def serialize_instance(instance: Instance) -> str:
    return json.dumps(
        {
            "n_left": instance.n_left,
            "n_right": instance.n_right,
            "deg_left": list(instance.deg_left),
            "deg_right": list(instance.deg_right),
            "val_left": [list(row) for row in instance.val_left],
            "val_right": [list(row) for row in instance.val_right],
        },
        sort_keys=True,
    )


def parse_matching(text: str, n_left: int, n_right: int) -> Matching:
    """Parse the ``{"edges": [[i, j], ...]}`` matching format."""
    data = json.loads(text)
    if not isinstance(data, dict) or set(data) != {"edges"}:
        raise SchemaError("$: expected an object with the single key 'edges'")
    raw = data["edges"]
    if not isinstance(raw, list):
        raise SchemaError("$.edges: expected an array")
    edges = []
    for k, pair in enumerate(raw):
        if not isinstance(pair, list) or len(pair) != 2:
            raise SchemaError(f"$.edges[{k}]: expected a pair [i, j]")
        i = _schema_int(pair[0], f"$.edges[{k}][0]")
        j = _schema_int(pair[1], f"$.edges[{k}][1]")
        if not (0 <= i < n_left and 0 <= j < n_right):
            raise SchemaError(f"$.edges[{k}]: ({i},{j}) out of range")
        if (i, j) in edges:
            raise SchemaError(f"$.edges[{k}]: duplicate edge ({i},{j})")
        edges.append((i, j))
    return Matching.from_edges(n_left, n_right, edges)


def serialize_matching(matching: Matching) -> str:
    return json.dumps({"edges": [list(e) for e in matching.edges()]})
