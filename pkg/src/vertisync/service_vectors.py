"""Feasible takeoff-rate vectors and the throughput regions they span.

A service vector assigns each O-D pair a takeoff rate m/k_tau per step that a
periodic, conflict-free schedule can sustain indefinitely. Rates live on the
1/k_tau lattice; its witness is the per-pair set of takeoff residues modulo
k_tau. The region calculators answer whether a demand vector is dominated by a
sub-convex combination of the enumerated vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .lp import GE, LE, LinearProgram, solve_lp
from .network import NetworkSpec, ODPair, SlotSystem
from .reservations import ReservationLedger


class VectorError(ValueError):
    pass


@dataclass(frozen=True)
class ServiceVector:
    """Rates as integer numerators over k_tau, plus the witness residue table."""

    numerators: tuple
    k_tau: int
    offsets: tuple  # per pair, sorted tuple of takeoff residues in [0, k_tau)

    @property
    def rates(self) -> tuple:
        return tuple(m / self.k_tau for m in self.numerators)

    def as_array(self) -> np.ndarray:
        return np.array(self.numerators, dtype=float) / self.k_tau

    def active_pairs(self, net: NetworkSpec) -> tuple:
        return tuple(p for p, m in zip(net.od_pairs, self.numerators) if m > 0)

    def __str__(self) -> str:
        return "(" + ", ".join(f"{m}/{self.k_tau}" for m in self.numerators) + ")"


@dataclass(frozen=True)
class WitnessViolation:
    step: int
    reason: str
    pairs: tuple


@dataclass(frozen=True)
class RegionCertificate:
    member: bool
    strict: bool
    weights: Optional[tuple] = None       # x_i, when member
    margin: Optional[float] = None        # optimal slack epsilon
    violated_pair: Optional[int] = None   # pair index, when not member


@dataclass(frozen=True)
class EnumerationOptions:
    max_active_pairs: Optional[int] = None
    maximal_only: bool = False
    node_budget: int = 5_000_000
    vector_budget: int = 200_000


@dataclass(frozen=True)
class EnumerationResult:
    vectors: tuple
    truncated: bool = False

    def rate_matrix(self) -> np.ndarray:
        """P x R matrix with one column per vector."""
        if not self.vectors:
            return np.zeros((0, 0))
        return np.column_stack([v.as_array() for v in self.vectors])


class _ResidueTables:
    """Periodic (mod k_tau) occupancy used to assign witness offsets.

    In a k_tau-periodic schedule every sliding window of k_tau steps sees each
    residue exactly once, so the sliding-window separation rules collapse to
    per-residue counting.
    """

    def __init__(self, net: NetworkSpec, slots: SlotSystem):
        self.net = net
        self.slots = slots
        self.k = net.k_tau
        self.class_occ = {}     # class rep -> set of residues
        self.vert_tk = {v.id: [0] * self.k for v in net.vertiports}
        self.vert_ld = {v.id: [0] * self.k for v in net.vertiports}
        self.pads = {v.id: v.num_vertipads for v in net.vertiports}

    def _landing_ok(self, v, ell: int, extra_tk=None) -> bool:
        # Adding a landing at residue ell keeps, for every residue t != ell:
        # takeoffs(t) + total_landings + 1 - landings(t) <= pads.
        tk = self.vert_tk[v]
        ld = self.vert_ld[v]
        total = sum(ld) + 1
        for t in range(self.k):
            tkt = tk[t] + (1 if extra_tk == t else 0)
            ldt = ld[t] + (1 if t == ell else 0)
            if tkt + total - ldt > self.pads[v]:
                return False
        return True

    def _takeoff_2i_ok(self, v, r: int) -> bool:
        ld = self.vert_ld[v]
        total = sum(ld)
        return self.vert_tk[v][r] + 1 + total - ld[r] <= self.pads[v]

    def residue_feasible(self, pair: ODPair, pi: int, r: int, chosen) -> bool:
        k = self.k
        steps = self.net.flight_steps(pair)
        if r in chosen:
            return False
        for i in range(1, steps):
            rep = self.slots.canon[(pi, i)]
            if ((r + i) % k) in self.class_occ.get(rep, ()):
                return False
        o, d = pair.origin, pair.destination
        if sum(self.vert_tk[o]) + 1 > self.pads[o]:
            return False
        if not self._takeoff_2i_ok(o, r):
            return False
        ell = (r + steps) % k
        same = o == d  # cannot happen for valid pairs, kept for safety
        if not self._landing_ok(d, ell, extra_tk=r if same else None):
            return False
        if o == d:
            return True
        # The new takeoff at the origin also has to survive the landing-window
        # rule once this pair's own landings do not land at the origin.
        return True

    def add_residue(self, pair: ODPair, pi: int, r: int) -> None:
        k = self.k
        steps = self.net.flight_steps(pair)
        for i in range(1, steps):
            rep = self.slots.canon[(pi, i)]
            self.class_occ.setdefault(rep, set()).add((r + i) % k)
        self.vert_tk[pair.origin][r] += 1
        self.vert_ld[pair.destination][(r + steps) % k] += 1

    def remove_residue(self, pair: ODPair, pi: int, r: int) -> None:
        k = self.k
        steps = self.net.flight_steps(pair)
        for i in range(1, steps):
            rep = self.slots.canon[(pi, i)]
            self.class_occ[rep].discard((r + i) % k)
        self.vert_tk[pair.origin][r] -= 1
        self.vert_ld[pair.destination][(r + steps) % k] -= 1

    def assign_pair(self, pair: ODPair, pi: int, m: int):
        """Greedy earliest residues for m takeoffs per period; None on failure.

        On success the residues are recorded; the caller unassigns on backtrack.
        """
        chosen = []
        for _ in range(m):
            placed = False
            for r in range(self.k):
                if self.residue_feasible(pair, pi, r, chosen):
                    self.add_residue(pair, pi, r)
                    chosen.append(r)
                    placed = True
                    break
            if not placed:
                for r in chosen:
                    self.remove_residue(pair, pi, r)
                return None
        return tuple(chosen)

    def unassign_pair(self, pair: ODPair, pi: int, residues) -> None:
        for r in residues:
            self.remove_residue(pair, pi, r)


def _validate_lattice(net: NetworkSpec, rates: Sequence) -> tuple:
    k = net.k_tau
    if len(rates) != net.num_pairs:
        raise VectorError(f"rate vector length {len(rates)} != {net.num_pairs} pairs")
    numerators = []
    for p, r in zip(net.od_pairs, rates):
        m = r * k
        if r < -1e-12 or r > 1 + 1e-12 or abs(m - round(m)) > 1e-9:
            raise VectorError(
                f"rate {r!r} for {p} is not a multiple of 1/k_tau = 1/{k} in [0, 1]")
        numerators.append(int(round(m)))
    return tuple(numerators)


def assign_offsets(net: NetworkSpec, slots: SlotSystem, numerators):
    """Earliest-feasible witness residues per pair, in pair order.

    Returns (offsets, None) on success or (None, pair) naming the first pair
    that cannot be placed.
    """
    tables = _ResidueTables(net, slots)
    offsets = []
    for pi, (pair, m) in enumerate(zip(net.od_pairs, numerators)):
        if m == 0:
            offsets.append(())
            continue
        chosen = tables.assign_pair(pair, pi, m)
        if chosen is None:
            return None, pair
        offsets.append(tuple(sorted(chosen)))
    return tuple(offsets), None


def verify_service_vector(net: NetworkSpec, slots: SlotSystem, rates: Sequence):
    """Build and check a periodic witness for the given rate vector.

    Replays continuous takeoffs at the witness offsets over several periods plus
    the longest flight time through the reservation rules; returns the verified
    ServiceVector or a WitnessViolation naming the first conflict.
    """
    numerators = _validate_lattice(net, rates)
    if sum(numerators) == 0:
        raise VectorError("the all-zero vector is not a service vector")
    k = net.k_tau
    offsets, stuck = assign_offsets(net, slots, numerators)
    if offsets is None:
        return WitnessViolation(
            step=-1,
            reason=f"no conflict-free takeoff offsets for {stuck}",
            pairs=(stuck,),
        )

    horizon = 3 * k + 2 * max(1, net.max_flight_steps())
    ledger = ReservationLedger(net, slots)
    takeoffs = []
    for pair, res in zip(net.od_pairs, offsets):
        for r in res:
            takeoffs.extend((t, pair) for t in range(r, horizon, k))
    takeoffs.sort(key=lambda item: (item[0], net.pair_index(item[1])))
    for t, pair in takeoffs:
        reason = ledger.first_conflict(pair, t)
        if reason is not None:
            others = tuple(q for q, res in zip(net.od_pairs, offsets) if res)
            return WitnessViolation(step=t, reason=reason, pairs=others)
        ledger.commit_unchecked(pair, t)
    return ServiceVector(numerators=numerators, k_tau=k, offsets=offsets)


def _arithmetic_cap(tables: _ResidueTables, pair: ODPair, pi: int) -> int:
    """Cheap upper bound on the feasible rate numerator for one pair given the
    current occupancy (necessary conditions only)."""
    k = tables.k
    net = tables.net
    cap = min(k, tables.pads[pair.origin] - sum(tables.vert_tk[pair.origin]))
    if cap <= 0:
        return 0
    steps = net.flight_steps(pair)
    for i in range(1, steps):
        rep = tables.slots.canon[(pi, i)]
        free = k - len(tables.class_occ.get(rep, ()))
        if free < cap:
            cap = free
            if cap <= 0:
                return 0
    # Landing budget at the destination: every new landing raises the total
    # landing count that competes for pads at all other residues.
    d = pair.destination
    ld = tables.vert_ld[d]
    tk = tables.vert_tk[d]
    worst = max(tk[t] - ld[t] for t in range(k))
    cap = min(cap, tables.pads[d] - worst - sum(ld))
    return max(0, cap)


def enumerate_service_vectors(
    net: NetworkSpec,
    slots: SlotSystem,
    options: EnumerationOptions = EnumerationOptions(),
) -> EnumerationResult:
    """Verified vectors on the rate lattice, depth-first with conflict pruning.

    With maximal_only, the search walks rates from high to low and prunes any
    subtree whose optimistic completion is already dominated by a collected
    vector, so only the Pareto frontier of the feasible set is emitted. Output
    is in lexicographic numerator order either way.
    """
    pairs = net.od_pairs
    if not pairs:
        return EnumerationResult(vectors=())
    k = net.k_tau
    n_pairs = len(pairs)
    tables = _ResidueTables(net, slots)
    state = [0] * n_pairs
    budget = {"nodes": 0, "truncated": False}
    collected: list = []
    collected_arr = np.zeros((0, n_pairs), dtype=np.int16)

    def spend() -> bool:
        budget["nodes"] += 1
        if budget["nodes"] > options.node_budget:
            budget["truncated"] = True
        return budget["truncated"]

    def too_many_vectors() -> bool:
        if len(collected) > options.vector_budget:
            budget["truncated"] = True
        return budget["truncated"]

    if options.maximal_only:

        def dominated(candidate) -> bool:
            if collected_arr.shape[0] == 0:
                return False
            return bool(np.any(np.all(collected_arr >= candidate, axis=1)))

        def descend(pi: int, active: int):
            nonlocal collected_arr
            if budget["truncated"]:
                return
            if pi == n_pairs:
                leaf = tuple(state)
                if sum(leaf) > 0 and not dominated(np.array(leaf, dtype=np.int16)):
                    collected.append(leaf)
                    collected_arr = np.vstack(
                        [collected_arr, np.array(leaf, dtype=np.int16)])
                    too_many_vectors()
                return
            pair = pairs[pi]
            may_activate = (options.max_active_pairs is None
                            or active < options.max_active_pairs)
            start = _arithmetic_cap(tables, pair, pi) if may_activate else 0
            # Optimistic completion: per-pair caps computed independently given
            # the occupancy so far; a valid componentwise upper bound on every
            # leaf of this subtree (the activity cap only shrinks leaves).
            optimistic = np.array(state, dtype=np.int16)
            optimistic[pi] = _arithmetic_cap(tables, pair, pi)
            for pj in range(pi + 1, n_pairs):
                optimistic[pj] = _arithmetic_cap(tables, pairs[pj], pj)
            if dominated(optimistic):
                return
            for m in range(start, -1, -1):
                if spend():
                    return
                if m == 0:
                    state[pi] = 0
                    descend(pi + 1, active)
                    return
                chosen = tables.assign_pair(pair, pi, m)
                if chosen is None:
                    continue
                state[pi] = m
                descend(pi + 1, active + 1)
                tables.unassign_pair(pair, pi, chosen)
                state[pi] = 0

        descend(0, 0)
        chosen = [v for v in collected
                  if not np.any(np.all(collected_arr >= np.array(v, dtype=np.int16), axis=1)
                                & np.any(collected_arr != np.array(v, dtype=np.int16), axis=1))]
    else:
        feasible: list = []

        def descend_all(pi: int, active: int):
            if budget["truncated"]:
                return
            if pi == n_pairs:
                feasible.append(tuple(state))
                if len(feasible) > options.vector_budget:
                    budget["truncated"] = True
                return
            pair = pairs[pi]
            for m in range(0, k + 1):
                if budget["truncated"]:
                    return
                if m > 0 and (options.max_active_pairs is not None
                              and active >= options.max_active_pairs):
                    break
                if spend():
                    return
                if m == 0:
                    state[pi] = 0
                    descend_all(pi + 1, active)
                    continue
                assigned = tables.assign_pair(pair, pi, m)
                if assigned is None:
                    break  # rates are downward closed: higher m cannot succeed
                state[pi] = m
                descend_all(pi + 1, active + 1)
                tables.unassign_pair(pair, pi, assigned)
                state[pi] = 0

        descend_all(0, 0)
        chosen = [v for v in feasible if sum(v) > 0]

    chosen.sort()
    vectors = []
    for vec in chosen:
        offsets, stuck = assign_offsets(net, slots, vec)
        if offsets is None:  # pragma: no cover - enumeration already proved it
            raise VectorError(f"witness vanished for {vec} at {stuck}")
        vectors.append(ServiceVector(numerators=vec, k_tau=k, offsets=offsets))
    return EnumerationResult(vectors=tuple(vectors), truncated=budget["truncated"])


def _region_lp(lam: np.ndarray, rates: np.ndarray):
    """max eps s.t. rates @ x >= lam + eps, sum x <= 1, x >= 0. Returns (eps, x)."""
    n_pairs, n_vec = rates.shape
    n = n_vec + 1  # x plus eps
    obj = np.zeros(n)
    obj[-1] = -1.0  # maximise eps
    lower = [0.0] * n_vec + [-1e9]
    lp = LinearProgram(objective=obj, lower=lower)
    for p in range(n_pairs):
        row = np.zeros(n)
        row[:n_vec] = rates[p]
        row[-1] = -1.0
        lp.add_row(row, GE, float(lam[p]))
    ones = np.zeros(n)
    ones[:n_vec] = 1.0
    lp.add_row(ones, LE, 1.0)
    sol = solve_lp(lp)
    if not sol.ok:  # pragma: no cover - always feasible by construction
        raise VectorError(f"region LP unexpectedly {sol.status}")
    x = sol.values[:n_vec]
    eps = sol.values[-1]
    return float(eps), x


def in_region(lam: Sequence, vectors: Sequence, strict: bool = False) -> RegionCertificate:
    """Membership of a per-step demand vector in D (strict=False) or its open
    interior counterpart (strict=True)."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise VectorError("demand rates must be non-negative")
    n_pairs = lam.shape[0]
    if not vectors:
        member = bool(np.all(lam <= 0)) and not strict
        return RegionCertificate(
            member=member, strict=strict,
            weights=() if member else None,
            margin=0.0 if member else None,
            violated_pair=None if member else int(np.argmax(lam)))
    rates = np.column_stack([v.as_array() for v in vectors])
    if rates.shape[0] != n_pairs:
        raise VectorError("demand length does not match the vectors' pair count")
    eps, x = _region_lp(lam, rates)
    ok = eps > 1e-9 if strict else eps >= -1e-9
    if ok:
        return RegionCertificate(member=True, strict=strict,
                                 weights=tuple(float(v) for v in x), margin=eps)
    served = rates @ x
    shortfall = lam - served
    return RegionCertificate(member=False, strict=strict, margin=eps,
                             violated_pair=int(np.argmax(shortfall)))


def max_uniform_scale(direction: Sequence, vectors: Sequence) -> float:
    """sup { theta : theta * direction in D }, exact LP value."""
    d = np.asarray(direction, dtype=float)
    if np.any(d < 0) or not np.any(d > 0):
        raise VectorError("direction must be non-negative and non-zero")
    if not vectors:
        return 0.0
    rates = np.column_stack([v.as_array() for v in vectors])
    if rates.shape[0] != d.shape[0]:
        raise VectorError("direction length does not match the vectors' pair count")
    n_vec = rates.shape[1]
    n = n_vec + 1  # x plus theta
    obj = np.zeros(n)
    obj[-1] = -1.0
    lp = LinearProgram(objective=obj)
    for p in range(d.shape[0]):
        if d[p] == 0 and np.all(rates[p] == 0):
            continue
        row = np.zeros(n)
        row[:n_vec] = rates[p]
        row[-1] = -d[p]
        lp.add_row(row, GE, 0.0)
    ones = np.zeros(n)
    ones[:n_vec] = 1.0
    lp.add_row(ones, LE, 1.0)
    sol = solve_lp(lp)
    if not sol.ok:  # pragma: no cover
        raise VectorError(f"scale LP unexpectedly {sol.status}")
    return float(sol.values[-1])


@dataclass(frozen=True)
class CompanionReport:
    vector: ServiceVector
    satisfied: bool
    missing_opposite: tuple = ()
    rate_conflict: bool = False
    companion: Optional[ServiceVector] = None


def has_symmetric_companion(net: NetworkSpec, slots: SlotSystem, vectors: Sequence):
    """For each vector, check a companion exists that serves every active pair
    and its opposite at the same rate. Returns one report per vector."""
    from .network import opposite

    reports = []
    for vec in vectors:
        missing = []
        conflict = False
        wanted = {}
        for p, m in zip(net.od_pairs, vec.numerators):
            if m == 0:
                continue
            q = opposite(net, p)
            if q is None:
                missing.append(p)
                continue
            for key, val in ((p, m), (q, m)):
                if wanted.get(key, val) != val:
                    conflict = True
                wanted[key] = val
        if missing or conflict:
            reports.append(CompanionReport(vec, False, tuple(missing), conflict))
            continue
        candidate = [0.0] * net.num_pairs
        for p, m in wanted.items():
            candidate[net.pair_index(p)] = m / net.k_tau
        result = verify_service_vector(net, slots, candidate)
        if isinstance(result, ServiceVector):
            reports.append(CompanionReport(vec, True, companion=result))
        else:
            reports.append(CompanionReport(vec, False, rate_conflict=False))
    return tuple(reports)
