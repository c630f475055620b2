"""Constructive matching algorithms.

The cyclic round-robin family (`round_robin_ordering`, `restricted_rr_coprime`,
`restricted_rr`, `general_sd_def1`) is purely positional: it treats index
order as the common preference ranking, so callers relabel instances first
when their common ranking is not 0, 1, 2, ...  The greedy pickers
(`classic_round_robin`, `three_phase_rr`) consume cardinal valuation rows
directly and therefore work on unrelabeled instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .errors import BadParameter, NotCoprime, SizeMismatch
from .fairness import weak_mms_partition
from .instances import Instance, Matching, Side, derive_ordinal


@dataclass(frozen=True)
class RoundRobinOrdering:
    """Turn order over one side: position p picks agent (a + p * x^-1) mod n."""

    n: int
    a: int
    x: int
    order: tuple[int, ...]


def round_robin_ordering(n: int, a: int, x: int) -> RoundRobinOrdering:
    """Build the engineered pick ordering for offset a and step parameter x.

    Requires gcd(x, n) == 1 so the modular inverse of x exists.
    """
    if n < 1:
        raise BadParameter(f"n must be positive, got {n}")
    if not 0 <= a < n:
        raise BadParameter(f"a must be in [0, {n}), got {a}")
    try:
        x_inv = pow(x % n, -1, n)
    except ValueError:
        raise NotCoprime(f"x={x} is not invertible modulo n={n}") from None
    order = tuple((a + p * x_inv) % n for p in range(n))
    return RoundRobinOrdering(n=n, a=a, x=x, order=order)


def restricted_rr_coprime(n: int, d: int, a: int, x: int) -> Matching:
    """Round robin with the engineered ordering, for gcd(n, d) == 1.

    Both sides have n agents with uniform cap d, and the construction is
    positional: right agent j is picked by the d agents at ordering positions
    j*d .. j*d+d-1 (cyclically).  Under identical index-order rankings on
    both sides the result is complete and doubly SD-envy-free up to one.
    """
    if n < 1 or not 0 <= d <= n:
        raise BadParameter(f"need n >= 1 and 0 <= d <= n, got n={n}, d={d}")
    if math.gcd(n, d) != 1:
        raise NotCoprime(f"n={n} and d={d} are not coprime")
    if x not in (d, n - d):
        raise BadParameter(f"x must be d={d} or n-d={n - d}, got {x}")
    ordering = round_robin_ordering(n, a, x)
    rows = [[0] * n for _ in range(n)]
    for j in range(n):
        for t in range(d):
            rows[ordering.order[(j * d + t) % n]][j] = 1
    return Matching(n, n, tuple(tuple(r) for r in rows))


BlockChoices = Mapping[tuple[int, int], tuple[int, int]]


def restricted_rr(n: int, d: int,
                  block_choices: Optional[BlockChoices] = None) -> Matching:
    """Round robin for arbitrary (n, d) via gcd block composition.

    With g = gcd(n, d), both sides split into g consecutive blocks of
    n' = n/g agents, and each left-block/right-block pair is matched by
    :func:`restricted_rr_coprime` with degree d' = d/g.  ``block_choices``
    may supply an (a, x) pair per block pair (k, m); the default is (0, d').
    Any per-block choices yield a complete matching that is doubly
    SD-envy-free up to one under identical index-order rankings.
    """
    if n < 1 or not 0 <= d <= n:
        raise BadParameter(f"need n >= 1 and 0 <= d <= n, got n={n}, d={d}")
    g = math.gcd(n, d) if d else n
    n_sub, d_sub = n // g, d // g
    choices = dict(block_choices or {})
    for key in choices:
        if not (isinstance(key, tuple) and len(key) == 2
                and 0 <= key[0] < g and 0 <= key[1] < g):
            raise BadParameter(f"block key {key!r} out of range for g={g}")
    rows = [[0] * n for _ in range(n)]
    for k in range(g):
        for m in range(g):
            a, x = choices.get((k, m), (0, d_sub))
            sub = restricted_rr_coprime(n_sub, d_sub, a, x)
            for i in range(n_sub):
                for j in range(n_sub):
                    if sub.matrix[i][j]:
                        rows[n_sub * k + i][n_sub * m + j] = 1
    return Matching(n, n, tuple(tuple(r) for r in rows))


def general_sd_def1(instance: Instance) -> Matching:
    """Positional SD-DEF1 construction for asymmetric shapes.

    Requires uniform caps per side with equal total capacity.  The smaller
    side is padded with dummy agents (indexed after the real ones, hence
    ranked last), the square construction runs, and the dummies are deleted;
    every agent on the larger side loses the same number of dummy matches,
    so the result is complete.
    """
    degs_l, degs_r = instance.deg_left, instance.deg_right
    if len(set(degs_l)) != 1 or len(set(degs_r)) != 1:
        raise BadParameter("general_sd_def1 needs uniform caps on each side")
    n_l, n_r = instance.n_left, instance.n_right
    d_l, d_r = degs_l[0], degs_r[0]
    if n_l * d_l != n_r * d_r:
        raise SizeMismatch(
            f"total capacity differs: {n_l}*{d_l} != {n_r}*{d_r}"
        )
    if n_l <= n_r:
        big = restricted_rr(n_r, d_l)
        kept = big.matrix[:n_l]
        result = Matching(n_l, n_r, kept)
        if any(len(b) != d_r for b in result.right_bundles):
            raise AssertionError("dummy removal left uneven right degrees")
        return result
    swapped = Instance(
        n_left=n_r, n_right=n_l,
        deg_left=degs_r, deg_right=degs_l,
        val_left=instance.val_right, val_right=instance.val_left,
    )
    return general_sd_def1(swapped).transpose()


def _best_candidate(values: Sequence[int], candidates) -> Optional[int]:
    """Highest-valued candidate, ties broken by lowest index."""
    best = None
    for cand in candidates:
        if best is None or values[cand] > values[best]:
            best = cand
    return best


def classic_round_robin(instance: Instance, picking_side: Side = "left",
                        order: Optional[Sequence[int]] = None) -> Matching:
    """Cyclic greedy picking by cardinal valuations.

    Pickers take turns in ``order`` (default index order); in each turn the
    picker grabs its highest-valued opposite agent with remaining capacity it
    is not yet matched to (ties by index).  Sated pickers are skipped and
    the loop stops once a full cycle makes no pick.
    """
    n_pick = instance.n(picking_side)
    n_opp = instance.n("right" if picking_side == "left" else "left")
    if order is None:
        order = tuple(range(n_pick))
    if sorted(order) != list(range(n_pick)):
        raise BadParameter("order must be a permutation of the picking side")
    vals = instance.vals(picking_side)
    cap_pick = list(instance.deg(picking_side))
    cap_opp = list(instance.deg("right" if picking_side == "left" else "left"))
    matched = [set() for _ in range(n_pick)]
    progressed = True
    while progressed:
        progressed = False
        for p in order:
            if cap_pick[p] == 0:
                continue
            pick = _best_candidate(
                vals[p],
                (q for q in range(n_opp) if cap_opp[q] > 0 and q not in matched[p]),
            )
            if pick is None:
                continue
            matched[p].add(pick)
            cap_pick[p] -= 1
            cap_opp[pick] -= 1
            progressed = True
    if picking_side == "left":
        return Matching.from_left_bundles(instance.n_left, instance.n_right, matched)
    return Matching.from_right_bundles(instance.n_left, instance.n_right, matched)


def three_phase_rr(instance: Instance) -> Matching:
    """Three-phase construction for caps of two with one like-minded side.

    The left agents must share one ranking (taken from left agent 0's row);
    right preferences are arbitrary.  Right agents are processed in the
    common left ranking's order: the better half first claims fresh left
    agents, the worse half doubles up on those, and a final pass re-spreads
    the doubled matches onto untouched left agents from worst to best.  The
    result is complete, envy-free up to one on both sides, and prefix-fair
    for the left; all picks use the picker's own row with index ties.
    """
    n = instance.n_left
    if instance.n_right != n:
        raise BadParameter("three_phase_rr needs equal group sizes")
    if set(instance.deg_left) != {2} or set(instance.deg_right) != {2}:
        raise BadParameter("three_phase_rr needs every cap equal to 2")
    if n == 1:
        raise BadParameter("caps of 2 need at least 2 agents per side")
    ranked = derive_ordinal(instance, "left").ranking(0)
    val_r = instance.val_right
    left_matches: list[list[int]] = [[] for _ in range(n)]
    right_matches: list[list[int]] = [[] for _ in range(n)]

    def match(i: Optional[int], j: int) -> None:
        if (
            i is None
            or j in left_matches[i]
            or len(left_matches[i]) >= 2
            or len(right_matches[j]) >= 2
        ):
            raise AssertionError(f"construction invariant broken at pair ({i},{j})")
        left_matches[i].append(j)
        right_matches[j].append(i)

    def pick(j: int, eligible) -> Optional[int]:
        return _best_candidate(
            val_r[j],
            (i for i in eligible if i not in right_matches[j]),
        )

    def lefts_with_degree(k: int) -> list[int]:
        return [i for i in range(n) if len(left_matches[i]) == k]

    half = (n + 1) // 2
    first, second = ranked[:half], ranked[half:]

    # Phase 1: the better half (by the common left ranking) claims fresh
    # left agents, one each.
    for j in first:
        match(pick(j, lefts_with_degree(0)), j)

    # Phase 2: the worse half doubles up on those same left agents.  For odd
    # n the last right agent and the middle one need special placement so
    # that the phase-1 pool ends up exactly saturated.
    if n % 2 == 0:
        for j in second:
            match(pick(j, lefts_with_degree(1)), j)
    else:
        for j in second[:-1]:
            match(pick(j, lefts_with_degree(1)), j)
        j_mid, j_last = first[-1], second[-1]
        i_star = right_matches[j_mid][0]
        ones = lefts_with_degree(1)
        if i_star in ones:
            # The middle agent must later take the other singly-matched pool
            # agent, and it already holds i_star, so the last agent takes it.
            match(i_star, j_last)
        else:
            match(pick(j_last, ones), j_last)
        leftovers = lefts_with_degree(1)
        if len(leftovers) != 1:
            raise AssertionError("exactly one singly-matched pool agent expected")
        match(leftovers[0], j_mid)

    # Phase 3, worst to best: each worse-half agent moves onto a fresh left
    # agent and drags along the still-single partner sharing its current
    # match (doubly-matched partners stay put).
    for j in reversed(second):
        i_cur = right_matches[j][0]
        others = [j2 for j2 in left_matches[i_cur] if j2 != j]
        twin = others[0] if others else None
        fresh = pick(j, lefts_with_degree(0))
        match(fresh, j)
        if twin is not None and len(right_matches[twin]) == 1:
            match(fresh, twin)

    if n % 2 == 1:
        last_rights = [j for j in range(n) if len(right_matches[j]) == 1]
        last_lefts = lefts_with_degree(1)
        if len(last_rights) != 1 or len(last_lefts) != 1:
            raise AssertionError("final pairing expected one agent per side")
        match(last_lefts[0], last_rights[0])

    if any(len(b) != 2 for b in left_matches) or any(
        len(b) != 2 for b in right_matches
    ):
        raise AssertionError("three-phase construction did not saturate caps")
    return Matching.from_left_bundles(n, n, left_matches)


def d2_dmms_def1(n: int) -> Matching:
    """Symmetric cap-2 matching pairing opposite ends of the ranking.

    Agent i (on either side) is bundled with agents {i, n-i-1} of the other
    side; for odd n the three middle agents f-1, f, f+1 (f = n // 2) share
    the triangle {f-1, f}, {f-1, f+1}, {f, f+1}.  Under identical strictly
    decreasing valuations on both sides this is SD-DEF1 and gives every
    agent at least its maximin share.
    """
    if n < 2:
        raise BadParameter(f"need n >= 2, got {n}")
    f = n // 2
    bundles: list[tuple[int, int]] = []
    for i in range(n):
        if n % 2 == 1 and i in (f - 1, f, f + 1):
            if i == f - 1:
                bundles.append((f - 1, f))
            elif i == f:
                bundles.append((f - 1, f + 1))
            else:
                bundles.append((f, f + 1))
        else:
            bundles.append((min(i, n - i - 1), max(i, n - i - 1)))
    return Matching.from_left_bundles(n, n, bundles)


def weak_mms_matching(instance: Instance, *,
                      node_budget: int = 10**8,
                      time_budget: Optional[float] = None) -> Matching:
    """Block matching meeting every agent's weak maximin share.

    Needs identical valuations within each side, equal group sizes, and one
    common cap.  Each side of the market is partitioned optimally for the
    *other* side's common valuation (fewest parts, max-min value), and the
    k-th parts are joined completely.  Every agent then values its assigned
    block at least at its weak share.
    """
    n = instance.n_left
    if instance.n_right != n:
        raise BadParameter("weak_mms_matching needs equal group sizes")
    caps = set(instance.deg_left) | set(instance.deg_right)
    if len(caps) != 1:
        raise BadParameter("weak_mms_matching needs one common cap")
    for side in ("left", "right"):
        rows = instance.vals(side)
        if any(row != rows[0] for row in rows):
            raise BadParameter(f"{side} valuations are not identical")
    _, parts_right = weak_mms_partition(
        instance, "left", 0, node_budget=node_budget, time_budget=time_budget
    )
    _, parts_left = weak_mms_partition(
        instance, "right", 0, node_budget=node_budget, time_budget=time_budget
    )
    parts_right = sorted(parts_right, key=min)
    parts_left = sorted(parts_left, key=min)
    edges = [
        (i, j)
        for block_l, block_r in zip(parts_left, parts_right)
        for i in block_l
        for j in block_r
    ]
    return Matching.from_edges(n, n, edges)
