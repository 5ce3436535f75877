"""First-come first-serve baseline: each request is booked, in arrival order,
at the earliest takeoff step whose full itinerary is conflict-free."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .network import NetworkSpec, ODPair, SlotSystem
from .reservations import FlightReservation, ReservationLedger, ScheduleError

INFINITE_AIRCRAFT = "infinite_aircraft"
FLEET_CONSTRAINED = "fleet_constrained"


class UnschedulableError(ScheduleError):
    pass


@dataclass
class CommittedFlight:
    request_id: int
    pair: ODPair
    takeoff_step: int
    landing_step: int
    aircraft_id: str


@dataclass
class _FleetUnit:
    aircraft_id: str
    vertiport: object
    free_step: int  # earliest step a takeoff may use this aircraft


class FcfsState:
    def __init__(self, net: NetworkSpec, slots: SlotSystem,
                 mode: str = INFINITE_AIRCRAFT, fleet=None,
                 search_limit: int = 200000):
        if mode not in (INFINITE_AIRCRAFT, FLEET_CONSTRAINED):
            raise ValueError(f"unknown FCFS mode {mode!r}")
        if mode == FLEET_CONSTRAINED and not fleet:
            raise ValueError("fleet_constrained mode needs an initial fleet")
        self.net = net
        self.slots = slots
        self.mode = mode
        self.ledger = ReservationLedger(net, slots)
        self.committed: list = []
        self.search_limit = search_limit
        self._synth_counter = 0
        self._fleet = []
        if fleet:
            for aircraft_id, vertiport in fleet:
                self._fleet.append(_FleetUnit(str(aircraft_id), vertiport, 0))

    def _pick_aircraft(self, pair: ODPair, t: int) -> Optional[_FleetUnit]:
        best = None
        for unit in self._fleet:
            if unit.vertiport == pair.origin and unit.free_step <= t:
                if best is None or unit.aircraft_id < best.aircraft_id:
                    best = unit
        return best

    def _route_ever_served(self, pair: ODPair) -> bool:
        return any(unit.vertiport == pair.origin for unit in self._fleet)


def fcfs_schedule_next(state: FcfsState, request_id: int, pair: ODPair,
                       arrival_step: int) -> CommittedFlight:
    """Book the next request at its earliest conflict-free takeoff step.

    Requests must be offered strictly in arrival order; the commitment is
    final and all later requests plan around it.
    """
    t = arrival_step
    deadline = arrival_step + state.search_limit
    while t < deadline:
        if state.ledger.first_conflict(pair, t) is None:
            if state.mode == FLEET_CONSTRAINED:
                unit = state._pick_aircraft(pair, t)
                if unit is None:
                    if not state._route_ever_served(pair):
                        raise UnschedulableError(
                            f"request {request_id}: no aircraft ever available at "
                            f"{pair.origin!r} for {pair} (FCFS does not rebalance)")
                    t += 1
                    continue
                aircraft_id = unit.aircraft_id
            else:
                aircraft_id = f"fcfs-{state._synth_counter}"
                state._synth_counter += 1
            res = state.ledger.commit_unchecked(pair, t)
            if state.mode == FLEET_CONSTRAINED:
                unit.vertiport = pair.destination
                unit.free_step = res.landing_step + state.net.k_tau
            flight = CommittedFlight(request_id, pair, res.takeoff_step,
                                     res.landing_step, aircraft_id)
            state.committed.append(flight)
            return flight
        t += 1
    raise UnschedulableError(
        f"request {request_id}: no feasible takeoff for {pair} within "
        f"{state.search_limit} steps of arrival")
