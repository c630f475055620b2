"""Exact envy checkers and brute-force maximin-share oracles.

Everything here is pure and exact: utilities are integer sums, share ratios
are ``fractions.Fraction``.  The share oracles enumerate bundle systems (or
partitions) with memoized branch-and-bound, so they are meant for desk-scale
markets; they take explicit node/time budgets and raise
:class:`~fairmatch.errors.BudgetExceeded` rather than returning approximations.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Literal, Optional, Sequence

from .errors import BadParameter, BudgetExceeded, DimensionMismatch
from .instances import (
    Instance,
    Matching,
    Side,
    derive_ordinal,
    matching_status,
    other_side,
)

DEFAULT_NODE_BUDGET = 10**8


class _BudgetHit(Exception):
    """Internal signal; public APIs convert it to BudgetExceeded."""


class Budget:
    """Shared node/time accounting for exhaustive computations."""

    def __init__(self, node_budget: Optional[int] = None,
                 time_budget: Optional[float] = None):
        self.nodes = 0
        self.node_budget = node_budget
        self.deadline = (
            None if time_budget is None else time.monotonic() + time_budget
        )

    def charge(self, n: int = 1) -> None:
        self.nodes += n
        if self.node_budget is not None and self.nodes > self.node_budget:
            raise _BudgetHit()
        if (
            self.deadline is not None
            and (self.nodes & 1023) == 0
            and time.monotonic() > self.deadline
        ):
            raise _BudgetHit()


def bundle_value(values_row: Sequence[int], bundle: Sequence[int]) -> int:
    return sum(values_row[x] for x in bundle)


def utilities(instance: Instance, matching: Matching, side: Side) -> tuple[int, ...]:
    """Per-agent utility of the given side under the matching."""
    vals = instance.vals(side)
    bundles = matching.bundles(side)
    return tuple(bundle_value(vals[a], bundles[a]) for a in range(instance.n(side)))


# ---------------------------------------------------------------------------
# Envy checkers


@dataclass(frozen=True)
class EnvyWitness:
    """One violated envy comparison, replayable against its matching.

    For ``kind == "cardinal"`` the detail is ``gap``: how far the envier's
    utility falls below the envied bundle with the envier's ``c`` best
    matches removed.  For ``kind == "sd-prefix"`` the detail is the minimal
    violating prefix length ``prefix_len`` (0-based index t) plus the two
    prefix counts.
    """

    side: Side
    envier: int
    envied: int
    kind: Literal["cardinal", "sd-prefix"]
    gap: Optional[int] = None
    prefix_len: Optional[int] = None
    envier_count: Optional[int] = None
    envied_count: Optional[int] = None


def _check_dims(instance: Instance, matching: Matching) -> None:
    if (matching.n_left, matching.n_right) != (instance.n_left, instance.n_right):
        raise DimensionMismatch(
            f"matching is {matching.n_left}x{matching.n_right}, "
            f"instance is {instance.n_left}x{instance.n_right}"
        )


def ef_c_check(instance: Instance, matching: Matching, side: Side,
               c: int) -> list[EnvyWitness]:
    """All ordered pairs on ``side`` violating cardinal envy-freeness up to c.

    Agent a envies agent b beyond c matches iff a's own utility is below the
    value of b's bundle after discarding the c entries a values most (for
    additive valuations, discarding the c best is the optimal removal).
    Empty result means EF-c holds on that side.
    """
    if c < 0:
        raise BadParameter(f"c must be >= 0, got {c}")
    _check_dims(instance, matching)
    vals = instance.vals(side)
    bundles = matching.bundles(side)
    n = instance.n(side)
    witnesses = []
    for a in range(n):
        row = vals[a]
        own = bundle_value(row, bundles[a])
        for b in range(n):
            if b == a:
                continue
            others = sorted((row[x] for x in bundles[b]), reverse=True)
            reduced = sum(others[c:])
            if own < reduced:
                witnesses.append(
                    EnvyWitness(side, a, b, "cardinal", gap=reduced - own)
                )
    return witnesses


def sd_ef_c_check(instance: Instance, matching: Matching, side: Side,
                  c: int) -> list[EnvyWitness]:
    """All ordered pairs on ``side`` violating prefix-count envy-freeness up to c.

    Uses the side's derived ordinals.  For each pair and each prefix of the
    envier's ranking, the envied bundle may contain at most c more prefix
    members than the envier's own bundle; the witness records the minimal
    violating prefix length per pair.
    """
    if c < 0:
        raise BadParameter(f"c must be >= 0, got {c}")
    _check_dims(instance, matching)
    profile = derive_ordinal(instance, side)
    bundles = [set(b) for b in matching.bundles(side)]
    n = instance.n(side)
    witnesses = []
    for a in range(n):
        ranking = profile.ranking(a)
        for b in range(n):
            if b == a:
                continue
            cnt_a = cnt_b = 0
            for t, opp in enumerate(ranking):
                if opp in bundles[a]:
                    cnt_a += 1
                if opp in bundles[b]:
                    cnt_b += 1
                if cnt_a < cnt_b - c:
                    witnesses.append(
                        EnvyWitness(side, a, b, "sd-prefix", prefix_len=t,
                                    envier_count=cnt_a, envied_count=cnt_b)
                    )
                    break
    return witnesses


def verify_witness(instance: Instance, matching: Matching,
                   witness: EnvyWitness, c: int) -> bool:
    """Replay a witness against a matching and confirm it still violates."""
    _check_dims(instance, matching)
    vals = instance.vals(witness.side)
    bundles = matching.bundles(witness.side)
    row = vals[witness.envier]
    if witness.kind == "cardinal":
        own = bundle_value(row, bundles[witness.envier])
        others = sorted((row[x] for x in bundles[witness.envied]), reverse=True)
        reduced = sum(others[c:])
        return own < reduced and reduced - own == witness.gap
    profile = derive_ordinal(instance, witness.side)
    prefix = profile.ranking(witness.envier)[: witness.prefix_len + 1]
    own_set = set(bundles[witness.envier])
    other_set = set(bundles[witness.envied])
    cnt_a = sum(1 for o in prefix if o in own_set)
    cnt_b = sum(1 for o in prefix if o in other_set)
    return (
        cnt_a < cnt_b - c
        and cnt_a == witness.envier_count
        and cnt_b == witness.envied_count
    )


# ---------------------------------------------------------------------------
# Maximin-share oracles


def _maxmin_bundle_systems(values: Sequence[int], copies: Sequence[int],
                           bundle_caps: Sequence[int], budget: Budget) -> int:
    """Max over bundle systems of the minimum bundle value.

    A system assigns one bundle per entry of ``bundle_caps``; bundle k holds
    at most ``bundle_caps[k]`` distinct items, and item j may appear in at
    most ``copies[j]`` bundles.  Items are anonymous apart from their value,
    so states are memoized on the multiset of (value, remaining copies).
    """
    m = len(values)
    n_bundles = len(bundle_caps)
    if n_bundles == 0:
        raise BadParameter("a bundle system needs at least one bundle")
    caps = sorted(bundle_caps)
    order = sorted(range(m), key=lambda j: (-values[j], j))
    rem = list(copies)

    def feasible(target: int) -> bool:
        if target == 0:
            return True
        memo: dict = {}

        def state_key(bidx):
            return (bidx, tuple(sorted((values[j], rem[j]) for j in range(m) if rem[j])))

        def solve(bidx: int) -> bool:
            if bidx == n_bundles:
                return True
            budget.charge()
            key = state_key(bidx)
            cached = memo.get(key)
            if cached is not None:
                return cached
            total = sum(rem[j] * values[j] for j in range(m))
            if total < target * (n_bundles - bidx):
                memo[key] = False
                return False
            res = fill(0, target, caps[bidx], bidx)
            memo[key] = res
            return res

        def fill(pos: int, need: int, slots: int, bidx: int) -> bool:
            if slots <= 0:
                return False
            budget.charge()
            # Reachability: the best this bundle can still do from here.
            best = 0
            taken = 0
            for k in range(pos, m):
                j = order[k]
                if rem[j]:
                    best += values[j]
                    taken += 1
                    if taken == slots or best >= need:
                        break
            if best < need:
                return False
            prev = -1
            for k in range(pos, m):
                j = order[k]
                if rem[j] == 0:
                    continue
                if prev >= 0 and values[prev] == values[j] and rem[prev] == rem[j]:
                    continue  # interchangeable with an item already tried
                prev = j
                rem[j] -= 1
                if values[j] >= need:
                    ok = solve(bidx + 1)
                else:
                    ok = fill(k + 1, need - values[j], slots - 1, bidx)
                rem[j] += 1
                if ok:
                    return True
            return False

        return solve(0)

    min_cap = caps[0]
    top_vals = sorted(values, reverse=True)[:min_cap]
    ub = min(
        sum(c * v for c, v in zip(copies, values)) // n_bundles,
        sum(top_vals),
    )
    lo, hi = 0, ub
    try:
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if feasible(mid):
                lo = mid
            else:
                hi = mid - 1
    except _BudgetHit:
        raise BudgetExceeded(
            "bundle-system oracle ran out of budget",
            best=lo, nodes=budget.nodes,
        ) from None
    return lo


def _partition_maxmin(values: Sequence[int], cap: int, n_parts: int,
                      budget: Budget) -> tuple[int, list[tuple[int, ...]]]:
    """Max-min partition of all items into ``n_parts`` parts of size <= cap.

    Returns the optimal minimum part value together with one achieving
    partition.  Assumes ``n_parts * cap >= len(values)``.
    """
    m = len(values)
    full = (1 << m) - 1

    def feasible(target: int, record: Optional[list] = None) -> bool:
        memo: dict = {}

        def solve(mask: int, parts_left: int) -> bool:
            if mask == 0:
                return parts_left == 0
            if parts_left == 0:
                return False
            budget.charge()
            key = (mask, parts_left)
            cached = memo.get(key)
            if cached is not None and (record is None or cached is False):
                return cached
            count = mask.bit_count()
            if count > parts_left * cap:
                memo[key] = False
                return False
            if sum(values[j] for j in range(m) if mask >> j & 1) < target * parts_left:
                memo[key] = False
                return False
            a = (mask & -mask).bit_length() - 1
            rest = [j for j in range(m) if j != a and mask >> j & 1]
            # Parts beyond this one can hold at most (parts_left-1)*cap items,
            # so this part must absorb at least the overflow.
            min_extra = max(0, count - 1 - (parts_left - 1) * cap)

            def extend(start: int, chosen: list[int], value: int) -> bool:
                if value >= target and len(chosen) >= min_extra:
                    sub_mask = mask & ~(1 << a)
                    for x in chosen:
                        sub_mask &= ~(1 << x)
                    if solve(sub_mask, parts_left - 1):
                        if record is not None:
                            record.append(tuple(sorted([a] + chosen)))
                        return True
                if len(chosen) == cap - 1:
                    return False
                for idx in range(start, len(rest)):
                    chosen.append(rest[idx])
                    if extend(idx + 1, chosen, value + values[rest[idx]]):
                        return True
                    chosen.pop()
                return False

            res = extend(0, [], values[a])
            memo[key] = res
            return res

        if target == 0 and m <= n_parts * cap:
            # Always packable; still build a witness when asked.
            if record is None:
                return True
        return solve(full, n_parts)

    top = sorted(values, reverse=True)[:cap]
    lo, hi = 0, sum(top)
    try:
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if feasible(mid):
                lo = mid
            else:
                hi = mid - 1
        parts: list[tuple[int, ...]] = []
        if not feasible(lo, record=parts):
            raise AssertionError("optimal partition vanished on witness pass")
    except _BudgetHit:
        raise BudgetExceeded(
            "partition oracle ran out of budget", best=lo, nodes=budget.nodes
        ) from None
    parts.reverse()
    return lo, parts


def mms_value(instance: Instance, side: Side, agent: int, *,
              node_budget: int = DEFAULT_NODE_BUDGET,
              time_budget: Optional[float] = None) -> int:
    """Maximin share of ``agent`` on ``side``: the best minimum bundle value
    the agent could secure by choosing a whole valid matching.

    Valid matchings correspond exactly to bundle systems in which bundle k
    obeys the k-th same-side cap and each opposite agent appears at most its
    own cap many times, so the oracle enumerates those systems.
    """
    budget = Budget(node_budget, time_budget)
    return _maxmin_bundle_systems(
        instance.vals(side)[agent],
        instance.deg(other_side(side)),
        instance.deg(side),
        budget,
    )


def weak_mms_value(instance: Instance, side: Side, agent: int, *,
                   node_budget: int = DEFAULT_NODE_BUDGET,
                   time_budget: Optional[float] = None) -> int:
    """Weak maximin share: partitions of the opposite side, parts capped by
    the agent's own degree, ignoring opposite-side caps.

    Any partition with minimum value v and more than ceil(n/cap) parts can be
    merged down to exactly ceil(n/cap) parts without lowering the minimum, so
    the search fixes that part count.  Agents with cap 0 get share 0.
    """
    cap = instance.deg(side)[agent]
    if cap <= 0:
        return 0
    values = instance.vals(side)[agent]
    n_parts = -(-len(values) // cap)
    budget = Budget(node_budget, time_budget)
    value, _ = _partition_maxmin(values, cap, n_parts, budget)
    return value


def weak_mms_partition(instance: Instance, side: Side, agent: int, *,
                       node_budget: int = DEFAULT_NODE_BUDGET,
                       time_budget: Optional[float] = None
                       ) -> tuple[int, list[tuple[int, ...]]]:
    """Weak share value plus an optimal partition with exactly ceil(n/cap)
    parts (the fewest possible)."""
    cap = instance.deg(side)[agent]
    if cap <= 0:
        raise BadParameter("agent has degree cap 0; no partition exists")
    values = instance.vals(side)[agent]
    n_parts = -(-len(values) // cap)
    budget = Budget(node_budget, time_budget)
    return _partition_maxmin(values, cap, n_parts, budget)


def unconstrained_mms_value(instance: Instance, side: Side, agent: int, *,
                            node_budget: int = DEFAULT_NODE_BUDGET,
                            time_budget: Optional[float] = None) -> int:
    """Maximin share with the agent's own side's caps dropped.

    Bundles may be arbitrarily large (each opposite agent at most once per
    bundle) but opposite-side caps still limit how many bundles an opposite
    agent joins.  This is the generous benchmark against which the
    degree-constrained share can degrade by a factor linear in n.
    """
    budget = Budget(node_budget, time_budget)
    n_opp = instance.n(other_side(side))
    return _maxmin_bundle_systems(
        instance.vals(side)[agent],
        instance.deg(other_side(side)),
        (n_opp,) * instance.n(side),
        budget,
    )


def mms_values(instance: Instance, side: Side, *,
               node_budget: int = DEFAULT_NODE_BUDGET,
               time_budget: Optional[float] = None) -> tuple[int, ...]:
    """Per-agent MMS for a whole side, deduplicating identical valuation rows."""
    cache: dict[tuple[int, ...], int] = {}
    out = []
    for agent, row in enumerate(instance.vals(side)):
        if row not in cache:
            cache[row] = mms_value(
                instance, side, agent,
                node_budget=node_budget, time_budget=time_budget,
            )
        out.append(cache[row])
    return tuple(out)


def dmms_alpha(instance: Instance, matching: Matching,
               mms_left: Sequence[int], mms_right: Sequence[int]) -> Fraction:
    """Exact min over all agents of utility / MMS.

    Agents with MMS 0 contribute ratio 1: the share inequality holds
    vacuously for them, so they should never drag the ratio down (or up).
    """
    _check_dims(instance, matching)
    ratios = [Fraction(1)]
    for side, shares in (("left", mms_left), ("right", mms_right)):
        utils = utilities(instance, matching, side)
        for u, m in zip(utils, shares):
            ratios.append(Fraction(1) if m == 0 else Fraction(u, m))
    return min(ratios)


# ---------------------------------------------------------------------------
# Aggregate report


@dataclass(frozen=True)
class FairnessReport:
    """Envy and share diagnostics for one (instance, matching) pair."""

    valid: bool
    complete: bool
    ef1_left: bool
    ef1_right: bool
    sd_ef1_left: bool
    sd_ef1_right: bool
    witnesses: tuple[EnvyWitness, ...]
    mms_left: Optional[tuple[int, ...]] = None
    mms_right: Optional[tuple[int, ...]] = None
    alpha_dmms: Optional[Fraction] = None


def fairness_report(instance: Instance, matching: Matching, *,
                    with_mms: bool = False,
                    node_budget: int = DEFAULT_NODE_BUDGET,
                    time_budget: Optional[float] = None) -> FairnessReport:
    """Run all c=1 envy checks; optionally add the MMS oracle and ratio."""
    status = matching_status(instance, matching)
    witnesses: list[EnvyWitness] = []
    flags = {}
    for kind, check in (("ef1", ef_c_check), ("sd_ef1", sd_ef_c_check)):
        for side in ("left", "right"):
            found = check(instance, matching, side, 1)
            witnesses.extend(found)
            flags[f"{kind}_{side}"] = not found
    mms_l = mms_r = alpha = None
    if with_mms:
        mms_l = mms_values(instance, "left",
                           node_budget=node_budget, time_budget=time_budget)
        mms_r = mms_values(instance, "right",
                           node_budget=node_budget, time_budget=time_budget)
        alpha = dmms_alpha(instance, matching, mms_l, mms_r)
    return FairnessReport(
        valid=status.valid,
        complete=status.complete,
        witnesses=tuple(witnesses),
        mms_left=mms_l,
        mms_right=mms_r,
        alpha_dmms=alpha,
        **flags,
    )


def witness_to_dict(w: EnvyWitness) -> dict:
    out = {"side": w.side, "envier": w.envier, "envied": w.envied, "kind": w.kind}
    if w.kind == "cardinal":
        out["gap"] = w.gap
    else:
        out.update(
            prefix_len=w.prefix_len,
            envier_count=w.envier_count,
            envied_count=w.envied_count,
        )
    return out


def report_to_json(report: FairnessReport) -> str:
    data = {
        "valid": report.valid,
        "complete": report.complete,
        "ef1_left": report.ef1_left,
        "ef1_right": report.ef1_right,
        "sd_ef1_left": report.sd_ef1_left,
        "sd_ef1_right": report.sd_ef1_right,
        "witnesses": [witness_to_dict(w) for w in report.witnesses],
        "mms_left": None if report.mms_left is None else list(report.mms_left),
        "mms_right": None if report.mms_right is None else list(report.mms_right),
        "alpha_dmms": (
            None
            if report.alpha_dmms is None
            else {"num": report.alpha_dmms.numerator,
                  "den": report.alpha_dmms.denominator}
        ),
    }
    return json.dumps(data)
