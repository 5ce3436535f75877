"""Conflict-free occupancy bookkeeping shared by the schedulers.

A flight (pair p, takeoff step t) claims: slot classes along the route at
t+1 .. t+T-1, a takeoff at the origin at step t, and a landing at the
destination at step t+T. Feasibility mirrors the safety rules enforced by the
optimiser and re-checked by the trace monitor:

  * at most one aircraft per coinciding slot class per step (airborne slots),
  * at most one takeoff per O-D pair per step,
  * takeoffs from a vertiport within any window of k_tau steps <= pad count,
  * takeoffs at a step plus landings in the preceding u_tau-1 steps <= pads.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Optional

from .network import NetworkSpec, ODPair, SlotSystem


@dataclass(frozen=True)
class FlightReservation:
    pair: ODPair
    takeoff_step: int
    landing_step: int


class ScheduleError(RuntimeError):
    pass


class ReservationLedger:
    def __init__(self, net: NetworkSpec, slots: SlotSystem):
        self.net = net
        self.slots = slots
        self.k = net.k_tau
        self.u_tau = net.k_tau
        self._pads = {v.id: v.num_vertipads for v in net.vertiports}
        self._steps = {p: net.flight_steps(p) for p in net.od_pairs}
        self._pair_index = {p: i for i, p in enumerate(net.od_pairs)}
        self._class_occ = defaultdict(set)        # class rep -> occupied steps
        self._pair_takeoff = defaultdict(set)     # pair -> steps
        self._vert_takeoff = defaultdict(lambda: defaultdict(int))  # v -> step -> n
        self._vert_landing = defaultdict(lambda: defaultdict(int))

    def _landings_between(self, v, lo: int, hi: int) -> int:
        """Landings at v in the closed step range [lo, hi]."""
        tab = self._vert_landing[v]
        return sum(tab.get(s, 0) for s in range(lo, hi + 1))

    def _takeoffs_between(self, v, lo: int, hi: int) -> int:
        tab = self._vert_takeoff[v]
        return sum(tab.get(s, 0) for s in range(lo, hi + 1))

    def first_conflict(self, pair: ODPair, t: int) -> Optional[str]:
        """None when a takeoff at step t is admissible, else a reason string."""
        k, u = self.k, self.u_tau
        steps = self._steps[pair]
        pi = self._pair_index[pair]
        o, d = pair.origin, pair.destination

        if t in self._pair_takeoff[pair]:
            return f"step {t}: a takeoff for {pair} is already booked"
        for i in range(1, steps):
            rep = self.slots.canon[(pi, i)]
            if (t + i) in self._class_occ[rep]:
                return f"step {t + i}: slot class {rep} already occupied"
        n_o = self._pads[o]
        for w in range(t - k + 1, t + 1):
            if self._takeoffs_between(o, w, w + k - 1) + 1 > n_o:
                return f"step {t}: takeoff separation at {o!r} (window from {w})"
        if self._vert_takeoff[o].get(t, 0) + 1 + self._landings_between(o, t - u + 1, t - 1) > n_o:
            return f"step {t}: pads at {o!r} blocked by recent landings"
        m = t + steps
        n_d = self._pads[d]
        for n in range(m + 1, m + u):
            if (self._vert_takeoff[d].get(n, 0)
                    + self._landings_between(d, n - u + 1, n - 1) + 1 > n_d):
                return f"step {m}: landing at {d!r} overloads pads around step {n}"
        return None

    def feasible(self, pair: ODPair, t: int) -> bool:
        return self.first_conflict(pair, t) is None

    def commit(self, pair: ODPair, t: int) -> FlightReservation:
        reason = self.first_conflict(pair, t)
        if reason is not None:
            raise ScheduleError(f"cannot commit {pair} at step {t}: {reason}")
        return self.commit_unchecked(pair, t)

    def commit_unchecked(self, pair: ODPair, t: int) -> FlightReservation:
        steps = self._steps[pair]
        pi = self._pair_index[pair]
        self._pair_takeoff[pair].add(t)
        for i in range(1, steps):
            self._class_occ[self.slots.canon[(pi, i)]].add(t + i)
        self._vert_takeoff[pair.origin][t] += 1
        self._vert_landing[pair.destination][t + steps] += 1
        return FlightReservation(pair, t, t + steps)

    def earliest_feasible(self, pair: ODPair, from_step: int, limit: int = 500000) -> int:
        t = from_step
        while t < from_step + limit:
            if self.first_conflict(pair, t) is None:
                return t
            t += 1
        raise ScheduleError(
            f"no feasible takeoff for {pair} within {limit} steps of {from_step}")
