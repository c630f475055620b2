"""Exhaustive feasibility search over complete matchings.

The engine assigns right agents' bundles in index order (bundles in
lexicographic order), so runs are canonical and deterministic.  Propagation
prunes with sound bounds only — prefix-count balance for SD constraints,
best-case completions for utility floors, capacity feasibility, and a
canonical-order cut between columns with identical valuation signatures —
and every reported witness is re-verified with the exact checkers before it
is returned.  ``ExhaustedInfeasible`` therefore certifies that the full
space was covered.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from itertools import combinations
from typing import Callable, Optional, Sequence

from .errors import BadParameter, BudgetExceeded
from .fairness import (
    Budget,
    _BudgetHit,
    bundle_value,
    dmms_alpha,
    mms_values,
    sd_ef_c_check,
    utilities,
)
from .instances import (
    Instance,
    Matching,
    Side,
    derive_ordinal,
    matching_status,
    parse_matching,
    serialize_matching,
)


class SearchStatus(str, Enum):
    FOUND = "found"
    EXHAUSTED_INFEASIBLE = "exhausted_infeasible"
    BUDGET_EXCEEDED = "budget_exceeded"


@dataclass(frozen=True)
class SearchSpec:
    """Conjunction of constraints for the feasibility engine.

    ``sd_ef_constraints`` holds (side, c) pairs; ``utility_floors`` holds
    (side, agent, minimum utility) triples.
    """

    require_complete: bool = True
    sd_ef_constraints: tuple[tuple[Side, int], ...] = ()
    utility_floors: tuple[tuple[Side, int, int], ...] = ()
    node_budget: int = 10**9
    time_budget: float = 3600.0

    def __post_init__(self):
        if self.node_budget <= 0 or self.time_budget <= 0:
            raise BadParameter("budgets must be positive")
        for side, c in self.sd_ef_constraints:
            if side not in ("left", "right") or c < 0:
                raise BadParameter(f"bad sd-ef constraint ({side!r}, {c!r})")
        for side, agent, floor in self.utility_floors:
            if side not in ("left", "right") or floor < 0:
                raise BadParameter(f"bad floor ({side!r}, {agent!r}, {floor!r})")


@dataclass(frozen=True)
class SearchOutcome:
    status: SearchStatus
    witness: Optional[Matching]
    nodes_explored: int


def spec_to_json(spec: SearchSpec) -> str:
    return json.dumps({
        "require_complete": spec.require_complete,
        "sd_ef_constraints": [list(x) for x in spec.sd_ef_constraints],
        "utility_floors": [list(x) for x in spec.utility_floors],
        "node_budget": spec.node_budget,
        "time_budget": spec.time_budget,
    })


def spec_from_json(text: str) -> SearchSpec:
    data = json.loads(text)
    return SearchSpec(
        require_complete=bool(data.get("require_complete", True)),
        sd_ef_constraints=tuple(
            (side, int(c)) for side, c in data.get("sd_ef_constraints", ())
        ),
        utility_floors=tuple(
            (side, int(a), int(f)) for side, a, f in data.get("utility_floors", ())
        ),
        node_budget=int(data.get("node_budget", 10**9)),
        time_budget=float(data.get("time_budget", 3600.0)),
    )


def outcome_to_json(outcome: SearchOutcome) -> str:
    return json.dumps({
        "status": outcome.status.value,
        "witness": (
            None if outcome.witness is None
            else {
                "n_left": outcome.witness.n_left,
                "n_right": outcome.witness.n_right,
                "edges": [list(e) for e in outcome.witness.edges()],
            }
        ),
        "nodes_explored": outcome.nodes_explored,
    })


def outcome_from_json(text: str) -> SearchOutcome:
    data = json.loads(text)
    witness = None
    if data.get("witness") is not None:
        w = data["witness"]
        witness = Matching.from_edges(
            w["n_left"], w["n_right"], [tuple(e) for e in w["edges"]]
        )
    return SearchOutcome(
        status=SearchStatus(data["status"]),
        witness=witness,
        nodes_explored=int(data["nodes_explored"]),
    )


class _StopSearch(Exception):
    """Raised when a visitor asks to stop early."""


class _Engine:
    """One search run; see module docstring for the branching scheme."""

    def __init__(self, instance: Instance, spec: SearchSpec, *,
                 extra_checks: Sequence = (), propagate: bool = True,
                 visitor: Optional[Callable[[Matching], Optional[bool]]] = None):
        self.inst = instance
        self.spec = spec
        self.extra = tuple(extra_checks)
        self.propagate = propagate
        self.visitor = visitor
        self.budget = Budget(spec.node_budget, spec.time_budget)
        self.visited = 0
        self.found: Optional[Matching] = None

        n_l, n_r = instance.n_left, instance.n_right
        self.n_l, self.n_r = n_l, n_r
        self.deg_l, self.deg_r = instance.deg_left, instance.deg_right
        self.val_l, self.val_r = instance.val_left, instance.val_right
        self.target = instance.completion_target() if spec.require_complete else None

        cs_left = [c for s, c in spec.sd_ef_constraints if s == "left"]
        cs_right = [c for s, c in spec.sd_ef_constraints if s == "right"]
        self.c_left = min(cs_left) if cs_left else None
        self.c_right = min(cs_right) if cs_right else None

        self.floors_l = [0] * n_l
        self.floors_r = [0] * n_r
        for side, agent, floor in spec.utility_floors:
            arr = self.floors_l if side == "left" else self.floors_r
            arr[agent] = max(arr[agent], floor)
        self.floored_rows = [i for i in range(n_l) if self.floors_l[i] > 0]
        self.track_util = bool(self.floored_rows)

        # Mutable search state.
        self.bundles: list[tuple[int, ...]] = []
        self.bundle_masks: list[int] = []
        self.rem_cap = list(self.deg_l)
        self.total_rem_cap = sum(self.deg_l)
        self.row_mask = [0] * n_l
        self.util_l = [0] * n_l
        self.total_util_l = 0
        self.sum_demand = sum(self.floors_l)
        self.assigned_total = 0

        self.colcap_suffix = [0] * (n_r + 1)
        for j in range(n_r - 1, -1, -1):
            self.colcap_suffix[j] = self.colcap_suffix[j + 1] + self.deg_r[j]

        if propagate:
            self._precompute_propagation()

    def _precompute_propagation(self):
        n_l, n_r = self.n_l, self.n_r
        if self.c_right is not None:
            # Group columns by ranking.  Checking a candidate against the
            # elementwise max of all assigned columns' prefix counts (under
            # the candidate's ranking) and against each group's elementwise
            # min of its own members' counts is exactly the set of pairwise
            # checks against every assigned column.
            profile = derive_ordinal(self.inst, "right")
            self.rgroup_of = [0] * n_r
            rank_index: dict = {}
            self.rgroup_pm: list[list[int]] = []
            for j in range(n_r):
                ranking = profile.ranking(j)
                if ranking not in rank_index:
                    rank_index[ranking] = len(self.rgroup_pm)
                    masks, acc = [], 0
                    for i in ranking:
                        acc |= 1 << i
                        masks.append(acc)
                    self.rgroup_pm.append(masks)
                self.rgroup_of[j] = rank_index[ranking]
            n_groups = len(self.rgroup_pm)
            self.all_max: list = [None] * n_groups
            self.own_min: list = [None] * n_groups
            self.rsd_undo: list = []
        if self.c_left is not None:
            # Rows sharing a ranking also share which prefixes close when a
            # column lands, so the pair checks collapse to max-over-all vs
            # min-over-group per newly closed prefix.
            profile = derive_ordinal(self.inst, "left")
            grouped: dict = {}
            for i in range(n_l):
                grouped.setdefault(profile.ranking(i), []).append(i)
            self.lgroups = []
            for ranking, members in grouped.items():
                masks, acc = [], 0
                for j in ranking:
                    acc |= 1 << j
                    masks.append(acc)
                runmax = -1
                run = []
                for j2 in ranking:
                    runmax = max(runmax, j2)
                    run.append(runmax)
                # closed[j]: longest prefix made entirely of columns <= j;
                # its counts are final once column j is assigned.
                closed = []
                for j in range(n_r):
                    hi = -1
                    for t in range(n_r):
                        if run[t] <= j:
                            hi = t
                        else:
                            break
                    closed.append(hi)
                self.lgroups.append((tuple(members), masks, closed))
        if self.floored_rows:
            # topk[i][j][k]: sum of the k largest own-row values over columns >= j.
            self.topk = []
            for i in range(self.n_l):
                per_col = []
                for j in range(n_r + 1):
                    tail = sorted(self.val_l[i][j:], reverse=True)
                    sums = [0]
                    for v in tail[: self.deg_l[i]]:
                        sums.append(sums[-1] + v)
                    while len(sums) <= self.deg_l[i]:
                        sums.append(sums[-1])
                    per_col.append(sums)
                self.topk.append(per_col)
            # Best possible total left utility contributed by columns >= j.
            self.coltop_suffix = [0] * (n_r + 1)
            for j in range(n_r - 1, -1, -1):
                col = sorted((self.val_l[i][j] for i in range(n_l)), reverse=True)
                self.coltop_suffix[j] = (
                    self.coltop_suffix[j + 1] + sum(col[: self.deg_r[j]])
                )
        # Columns interchangeable for every constraint in scope: equal caps,
        # equal own valuation rows, and every left agent indifferent.  SD
        # constraints over the left pin tie-broken ordinals, which column
        # swaps do not preserve, so the cut is disabled then.
        self.prev_sym = [None] * n_r
        if self.c_left is None and self.visitor is None:
            sig_last: dict = {}
            for j in range(n_r):
                sig = (
                    self.deg_r[j],
                    self.val_r[j],
                    tuple(self.val_l[i][j] for i in range(n_l)),
                )
                if sig in sig_last:
                    self.prev_sym[j] = sig_last[sig]
                sig_last[sig] = j

    # -- candidate filtering ------------------------------------------------

    def _right_sd_vecs(self, j: int, mask: int):
        """Prefix-count vectors of the candidate under every ranking group,
        or None if some assigned column pair-check would fail."""
        c = self.c_right
        n_l = self.n_l
        vecs = [
            [(mask & pm).bit_count() for pm in group_pm]
            for group_pm in self.rgroup_pm
        ]
        own = self.rgroup_of[j]
        high = self.all_max[own]
        if high is not None:
            v = vecs[own]
            for t in range(n_l):
                if v[t] < high[t] - c:
                    return None
        for g, low in enumerate(self.own_min):
            if low is None:
                continue
            v = vecs[g]
            for t in range(n_l):
                if v[t] > low[t] + c:
                    return None
        return vecs

    def _push_right_sd(self, j: int, vecs) -> None:
        own = self.rgroup_of[j]
        undo = []
        for g, vec in enumerate(vecs):
            old = self.all_max[g]
            undo.append(old)
            self.all_max[g] = (
                vec if old is None else [max(a, b) for a, b in zip(old, vec)]
            )
        old_min = self.own_min[own]
        undo.append(old_min)
        self.own_min[own] = (
            vecs[own] if old_min is None
            else [min(a, b) for a, b in zip(old_min, vecs[own])]
        )
        self.rsd_undo.append((own, undo))

    def _pop_right_sd(self) -> None:
        own, undo = self.rsd_undo.pop()
        for g in range(len(self.all_max)):
            self.all_max[g] = undo[g]
        self.own_min[own] = undo[-1]

    def _left_sd_ok(self, j: int) -> bool:
        c = self.c_left
        row_mask = self.row_mask
        n_l = self.n_l
        for members, masks, closed in self.lgroups:
            lo = closed[j - 1] if j > 0 else -1
            hi = closed[j]
            for t in range(lo + 1, hi + 1):
                pm = masks[t]
                mx = 0
                for i2 in range(n_l):
                    v = (row_mask[i2] & pm).bit_count()
                    if v > mx:
                        mx = v
                if mx == 0:
                    continue
                mn = min((row_mask[i] & pm).bit_count() for i in members)
                if mx > mn + c:
                    return False
        return True

    def _floors_ok(self, j: int) -> bool:
        nxt = j + 1
        for i in self.floored_rows:
            if (
                self.util_l[i] + self.topk[i][nxt][self.rem_cap[i]]
                < self.floors_l[i]
            ):
                return False
        # Every row ends at >= max(floor, earned so far); that total demand
        # must fit under the best achievable grand total.
        return self.sum_demand <= self.total_util_l + self.coltop_suffix[nxt]

    # -- main recursion ------------------------------------------------------

    def run(self) -> SearchOutcome:
        try:
            found = self._assign(0)
        except _BudgetHit:
            return SearchOutcome(
                SearchStatus.BUDGET_EXCEEDED, None, self.budget.nodes
            )
        except _StopSearch:
            return SearchOutcome(SearchStatus.FOUND, None, self.budget.nodes)
        if found:
            return SearchOutcome(SearchStatus.FOUND, self.found, self.budget.nodes)
        return SearchOutcome(
            SearchStatus.EXHAUSTED_INFEASIBLE, None, self.budget.nodes
        )

    def _candidates(self, j: int):
        avail = [i for i in range(self.n_l) if self.rem_cap[i] > 0]
        if self.target is not None:
            rem_target = self.target - self.assigned_total
            s_hi = min(self.deg_r[j], len(avail), rem_target)
            s_lo = max(0, rem_target - self.colcap_suffix[j + 1])
        else:
            s_hi = min(self.deg_r[j], len(avail))
            s_lo = 0
        if s_lo > s_hi:
            return []
        cands = []
        for s in range(s_lo, s_hi + 1):
            cands.extend(combinations(avail, s))
        cands.sort()
        return cands

    def _assign(self, j: int) -> bool:
        if j == self.n_r:
            return self._leaf()
        propagate = self.propagate
        floors_r_j = self.floors_r[j]
        track_util = self.track_util
        sd_right = propagate and self.c_right is not None
        for bundle in self._candidates(j):
            self.budget.charge()
            mask = 0
            for i in bundle:
                mask |= 1 << i
            rvecs = None
            if propagate:
                if self.prev_sym[j] is not None and bundle < self.bundles[self.prev_sym[j]]:
                    continue
                if floors_r_j and bundle_value(self.val_r[j], bundle) < floors_r_j:
                    continue
                if sd_right:
                    rvecs = self._right_sd_vecs(j, mask)
                    if rvecs is None:
                        continue
            # Place the bundle.
            self.bundles.append(bundle)
            self.bundle_masks.append(mask)
            if sd_right:
                self._push_right_sd(j, rvecs)
            bit = 1 << j
            for i in bundle:
                self.rem_cap[i] -= 1
                self.row_mask[i] |= bit
                if track_util:
                    gain = self.val_l[i][j]
                    old = self.util_l[i]
                    self.util_l[i] = old + gain
                    self.total_util_l += gain
                    floor_i = self.floors_l[i]
                    if old + gain > floor_i:
                        self.sum_demand += old + gain - max(floor_i, old)
            size = len(bundle)
            self.total_rem_cap -= size
            self.assigned_total += size
            ok = True
            if propagate:
                if self.c_left is not None and not self._left_sd_ok(j):
                    ok = False
                if ok and track_util and not self._floors_ok(j):
                    ok = False
                if ok and self.target is not None:
                    rem_target = self.target - self.assigned_total
                    if rem_target > self.total_rem_cap:
                        ok = False
                if ok:
                    for check in self.extra:
                        if not check.on_assign(self, j):
                            ok = False
                            break
            if ok and self._assign(j + 1):
                return True
            # Undo.
            self.bundles.pop()
            self.bundle_masks.pop()
            if sd_right:
                self._pop_right_sd()
            for i in bundle:
                self.rem_cap[i] += 1
                self.row_mask[i] &= ~bit
                if track_util:
                    gain = self.val_l[i][j]
                    now = self.util_l[i]
                    self.util_l[i] = now - gain
                    self.total_util_l -= gain
                    floor_i = self.floors_l[i]
                    if now > floor_i:
                        self.sum_demand -= now - max(floor_i, now - gain)
            self.total_rem_cap += size
            self.assigned_total -= size
        return False

    def _leaf(self) -> bool:
        matching = Matching.from_right_bundles(self.n_l, self.n_r, self.bundles)
        if self.visitor is not None:
            self.visited += 1
            if self.visitor(matching) is False:
                raise _StopSearch()
            return False
        # Authoritative re-verification with the exact checkers.
        status = matching_status(self.inst, matching)
        if not status.valid:
            return False
        if self.spec.require_complete and not status.complete:
            return False
        for side, c in self.spec.sd_ef_constraints:
            if sd_ef_c_check(self.inst, matching, side, c):
                return False
        for side, agent, floor in self.spec.utility_floors:
            if utilities(self.inst, matching, side)[agent] < floor:
                return False
        for check in self.extra:
            if not check.check_final(self.inst, matching):
                return False
        self.found = matching
        return True


def find_matching(instance: Instance, spec: SearchSpec, *,
                  extra_checks: Sequence = (), propagate: bool = True
                  ) -> SearchOutcome:
    """Decide whether a matching satisfying ``spec`` exists.

    ``extra_checks`` accepts additional constraint objects exposing
    ``on_assign(engine, j) -> bool`` (sound pruning) and
    ``check_final(instance, matching) -> bool`` (exact verdict).
    ``propagate=False`` disables all pruning; the status never changes,
    only the node count.
    """
    return _Engine(
        instance, spec, extra_checks=extra_checks, propagate=propagate
    ).run()


def enumerate_complete_matchings(
    instance: Instance,
    visitor: Callable[[Matching], Optional[bool]],
    *,
    node_budget: int = 10**9,
    time_budget: float = 3600.0,
) -> int:
    """Visit every complete valid matching exactly once, in canonical order.

    The visitor may return False to stop early.  Returns the number of
    matchings visited; raises :class:`BudgetExceeded` if the budget trips.
    """
    spec = SearchSpec(
        require_complete=True, node_budget=node_budget, time_budget=time_budget
    )
    engine = _Engine(instance, spec, propagate=False, visitor=visitor)
    outcome = engine.run()
    if outcome.status is SearchStatus.BUDGET_EXCEEDED:
        raise BudgetExceeded(
            "enumeration ran out of budget",
            best=engine.visited,
            nodes=outcome.nodes_explored,
        )
    return engine.visited


# ---------------------------------------------------------------------------
# Exact best share ratio


class CardinalEnvyFree:
    """Extra search constraint: cardinal EF-c on one side.

    Column pairs are checked exactly once both columns are assigned; row
    pairs are pruned with a sound bound (own best-case completion against
    the rival bundle's current reduced value, which only grows) and decided
    exactly at the leaf.
    """

    def __init__(self, side: Side, c: int):
        self.side = side
        self.c = c

    def on_assign(self, engine: _Engine, j: int) -> bool:
        c = self.c
        if self.side == "right":
            row = engine.val_r[j]
            own = bundle_value(row, engine.bundles[j])
            for j2 in range(j):
                other = sorted((row[i] for i in engine.bundles[j2]), reverse=True)
                if own < sum(other[c:]):
                    return False
                row2 = engine.val_r[j2]
                own2 = bundle_value(row2, engine.bundles[j2])
                mine = sorted((row2[i] for i in engine.bundles[j]), reverse=True)
                if own2 < sum(mine[c:]):
                    return False
            return True
        nxt = j + 1
        for a in range(engine.n_l):
            row = engine.val_l[a]
            best_own = sum(row[jj] for jj in range(engine.n_r)
                           if engine.row_mask[a] >> jj & 1)
            tail = sorted(row[nxt:], reverse=True)[: engine.rem_cap[a]]
            best_own += sum(tail)
            for b in range(engine.n_l):
                if b == a:
                    continue
                rival = sorted(
                    (row[jj] for jj in range(nxt) if engine.row_mask[b] >> jj & 1),
                    reverse=True,
                )
                if best_own < sum(rival[c:]):
                    return False
        return True

    def check_final(self, instance: Instance, matching: Matching) -> bool:
        from .fairness import ef_c_check

        return not ef_c_check(instance, matching, self.side, self.c)


@dataclass(frozen=True)
class AlphaResult:
    """Best achievable min utility/MMS ratio over complete matchings."""

    alpha: Fraction
    witness: Matching
    mms_left: tuple[int, ...]
    mms_right: tuple[int, ...]
    nodes_explored: int


def max_dmms_alpha(instance: Instance, *, node_budget: int = 10**9,
                   time_budget: float = 3600.0,
                   oracle_node_budget: int = 10**8) -> AlphaResult:
    """Maximize the minimum utility/MMS ratio over complete matchings.

    Rising-floor scheme: starting from any complete matching, repeatedly ask
    the engine for one whose every agent beats the incumbent ratio strictly
    (agents with MMS 0 are pinned at ratio 1 and excluded from the floors).
    The value is exact because utilities are integers.
    """
    mms_l = mms_values(instance, "left", node_budget=oracle_node_budget,
                       time_budget=time_budget)
    mms_r = mms_values(instance, "right", node_budget=oracle_node_budget,
                       time_budget=time_budget)
    nodes = 0

    def search(floors) -> SearchOutcome:
        nonlocal nodes
        remaining = node_budget - nodes
        if remaining <= 0:
            raise BudgetExceeded("ratio search ran out of budget", nodes=nodes)
        outcome = find_matching(
            instance,
            SearchSpec(
                require_complete=True,
                utility_floors=tuple(floors),
                node_budget=remaining,
                time_budget=time_budget,
            ),
        )
        nodes += outcome.nodes_explored
        return outcome

    first = search([])
    if first.status is SearchStatus.BUDGET_EXCEEDED:
        raise BudgetExceeded("ratio search ran out of budget", nodes=nodes)
    if first.status is not SearchStatus.FOUND:
        raise BadParameter("instance admits no complete matching")
    witness = first.witness
    alpha = dmms_alpha(instance, witness, mms_l, mms_r)
    while True:
        floors = []
        for side, shares in (("left", mms_l), ("right", mms_r)):
            for agent, share in enumerate(shares):
                if share == 0:
                    continue
                need = (alpha.numerator * share) // alpha.denominator + 1
                floors.append((side, agent, need))
        if not floors:
            break
        outcome = search(floors)
        if outcome.status is SearchStatus.BUDGET_EXCEEDED:
            raise BudgetExceeded(
                "ratio search ran out of budget", best=alpha, nodes=nodes
            )
        if outcome.status is not SearchStatus.FOUND:
            break
        new_alpha = dmms_alpha(instance, outcome.witness, mms_l, mms_r)
        if new_alpha <= alpha:
            break
        alpha, witness = new_alpha, outcome.witness
    return AlphaResult(
        alpha=alpha,
        witness=witness,
        mms_left=mms_l,
        mms_right=mms_r,
        nodes_explored=nodes,
    )
