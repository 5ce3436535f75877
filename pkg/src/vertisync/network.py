"""Network model: vertiports, O-D pairs, operational separations and the slot system.

All timing is normalised to integer steps of ``tau_c`` minutes as soon as a
config is loaded; minutes only appear at I/O boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import yaml


class NetworkError(ValueError):
    """Raised when a network config fails parsing or invariant validation."""


@dataclass(frozen=True, order=True)
class ODPair:
    origin: object
    destination: object

    def __str__(self) -> str:
        return f"{self.origin}->{self.destination}"


@dataclass(frozen=True)
class VertiportSpec:
    id: object
    num_vertipads: int
    parking_capacity: Optional[int] = None  # None = unbounded


# A slot is identified by (pair index, position index along the route).
SlotId = tuple


@dataclass(frozen=True)
class NetworkSpec:
    vertiports: tuple
    od_pairs: tuple
    tau: float            # takeoff/landing separation, minutes
    tau_c: float          # airborne-margin headway, minutes; also the step size
    flight_time: Mapping  # ODPair -> minutes
    route_links: Mapping  # ODPair -> tuple of link ids
    declared_coincidences: tuple = ()  # tuple of classes; each class a tuple of SlotId

    @property
    def k_tau(self) -> int:
        return round(self.tau / self.tau_c)

    @property
    def num_pairs(self) -> int:
        return len(self.od_pairs)

    def flight_steps(self, pair: ODPair) -> int:
        return round(self.flight_time[pair] / self.tau_c)

    def max_flight_steps(self) -> int:
        if not self.od_pairs:
            return 0
        return max(self.flight_steps(p) for p in self.od_pairs)

    def pair_index(self, pair: ODPair) -> int:
        try:
            return self.od_pairs.index(pair)
        except ValueError:
            raise NetworkError(f"unknown O-D pair {pair}") from None

    def pads(self, vertiport_id) -> int:
        for v in self.vertiports:
            if v.id == vertiport_id:
                return v.num_vertipads
        raise NetworkError(f"unknown vertiport {vertiport_id!r}")

    def vertiport_ids(self) -> tuple:
        return tuple(v.id for v in self.vertiports)


@dataclass(frozen=True)
class SlotSystem:
    slots: Mapping          # ODPair -> tuple of SlotId
    canon: Mapping          # SlotId -> class representative SlotId
    classes: Mapping        # representative -> tuple of member SlotIds
    total_distinct: int

    def representative(self, pair_index: int, slot_index: int) -> SlotId:
        return self.canon[(pair_index, slot_index)]


def opposite(net: NetworkSpec, pair: ODPair) -> Optional[ODPair]:
    """The reverse pair (d, o) if it is declared, else None."""
    if pair not in net.od_pairs:
        raise NetworkError(f"unknown O-D pair {pair}")
    rev = ODPair(pair.destination, pair.origin)
    return rev if rev in net.od_pairs else None


def _require(cond: bool, errors: list, msg: str) -> bool:
    if not cond:
        errors.append(msg)
    return cond


def _as_od(raw, context: str) -> ODPair:
    if not (isinstance(raw, (list, tuple)) and len(raw) == 2):
        raise NetworkError(f"{context}: od must be a [origin, destination] pair, got {raw!r}")
    return ODPair(raw[0], raw[1])


def load_network(config_text: str) -> NetworkSpec:
    """Parse and validate a network config (YAML text, schema fixed).

    Raises NetworkError with a parse location for malformed text, or with every
    failed invariant listed for an invalid network.
    """
    try:
        raw = yaml.safe_load(config_text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise NetworkError(f"config parse error{where}: {exc}") from exc
    if not isinstance(raw, dict):
        raise NetworkError("config parse error: top level must be a mapping")

    for key in ("tau_min", "tau_c_min", "vertiports"):
        if key not in raw:
            raise NetworkError(f"config field missing: {key}")

    errors: list = []
    tau = float(raw["tau_min"])
    tau_c = float(raw["tau_c_min"])
    _require(tau > 0, errors, "tau_min must be positive")
    _require(tau_c > 0, errors, "tau_c_min must be positive")
    k_ratio = tau / tau_c if tau_c > 0 else 0.0
    _require(
        tau >= tau_c and abs(k_ratio - round(k_ratio)) < 1e-9 and round(k_ratio) >= 1,
        errors,
        f"tau/tau_c must be a positive integer (got {tau}/{tau_c} = {k_ratio:g})",
    )

    vertiports = []
    seen_ids = set()
    for i, entry in enumerate(raw["vertiports"] or []):
        if not isinstance(entry, dict) or "id" not in entry:
            raise NetworkError(f"vertiports[{i}]: expected mapping with an 'id' field")
        vid = entry["id"]
        _require(vid not in seen_ids, errors, f"duplicate vertiport id {vid!r}")
        seen_ids.add(vid)
        pads = int(entry.get("num_vertipads", 1))
        _require(pads >= 1, errors, f"vertiport {vid!r}: num_vertipads must be positive")
        parking = entry.get("parking", "unbounded")
        parking_cap = None if parking in (None, "unbounded") else int(parking)
        if parking_cap is not None:
            _require(parking_cap >= 1, errors, f"vertiport {vid!r}: parking must be positive")
        vertiports.append(VertiportSpec(vid, pads, parking_cap))

    od_pairs = []
    flight_time = {}
    route_links = {}
    for i, entry in enumerate(raw.get("od_pairs") or []):
        if not isinstance(entry, dict):
            raise NetworkError(f"od_pairs[{i}]: expected a mapping")
        for key in ("origin", "destination", "flight_time_min"):
            if key not in entry:
                raise NetworkError(f"od_pairs[{i}]: field missing: {key}")
        pair = ODPair(entry["origin"], entry["destination"])
        _require(pair.origin in seen_ids, errors, f"{pair}: unknown origin vertiport")
        _require(pair.destination in seen_ids, errors, f"{pair}: unknown destination vertiport")
        _require(pair.origin != pair.destination, errors, f"{pair}: origin equals destination")
        _require(pair not in od_pairs, errors, f"{pair}: declared more than once")
        t_min = float(entry["flight_time_min"])
        steps = t_min / tau_c if tau_c > 0 else 0.0
        _require(
            t_min > 0 and abs(steps - round(steps)) < 1e-9 and round(steps) >= 1,
            errors,
            f"{pair}: flight_time_min {t_min:g} is not a positive multiple of tau_c",
        )
        od_pairs.append(pair)
        flight_time[pair] = t_min
        route_links[pair] = tuple(entry.get("links") or ())

    # Rebalancing requires every vertiport to reach every other through routes.
    if len(vertiports) > 1:
        ids = [v.id for v in vertiports]
        adj = {v: set() for v in ids}
        for p in od_pairs:
            if p.origin in adj:
                adj[p.origin].add(p.destination)
        for src in ids:
            seen = {src}
            stack = [src]
            while stack:
                for nxt in adj.get(stack.pop(), ()):
                    if nxt not in seen:
                        seen.add(nxt)
                        stack.append(nxt)
            _require(
                len(seen) == len(ids),
                errors,
                f"routes do not connect vertiport {src!r} to every other vertiport",
            )

    declared = []
    pair_idx = {p: i for i, p in enumerate(od_pairs)}
    for ci, cls in enumerate(raw.get("coincidences") or []):
        if not isinstance(cls, (list, tuple)) or len(cls) < 2:
            raise NetworkError(f"coincidences[{ci}]: expected a list of at least two (od, slot_index) members")
        members = []
        member_pairs = []
        ok = True
        for mj, member in enumerate(cls):
            if not (isinstance(member, (list, tuple)) and len(member) == 2):
                raise NetworkError(f"coincidences[{ci}][{mj}]: expected [od, slot_index]")
            pair = _as_od(member[0], f"coincidences[{ci}][{mj}]")
            idx = int(member[1])
            if not _require(pair in pair_idx, errors, f"coincidences[{ci}]: unknown pair {pair}"):
                ok = False
                continue
            n_slots = round(flight_time[pair] / tau_c) + 1
            if not _require(0 <= idx < n_slots, errors,
                            f"coincidences[{ci}]: slot index {idx} out of range for {pair}"):
                ok = False
                continue
            members.append((pair_idx[pair], idx))
            member_pairs.append((pair, idx, n_slots))
        if not ok:
            continue
        _require(
            len({m[0] for m in members}) == len(members),
            errors,
            f"coincidences[{ci}]: coinciding slots must belong to distinct O-D pairs",
        )
        for pair, idx, n_slots in member_pairs:
            first_or_last = idx == 0 or idx == n_slots - 1
            _require(
                not first_or_last,
                errors,
                f"coincidences[{ci}]: slot {idx} of {pair} is a vertipad slot and cannot coincide",
            )
        for a in range(len(member_pairs)):
            for b in range(a + 1, len(member_pairs)):
                pa, pb = member_pairs[a][0], member_pairs[b][0]
                shared = set(route_links[pa]) & set(route_links[pb])
                _require(
                    bool(shared),
                    errors,
                    f"coincidences[{ci}]: {pa} and {pb} share no declared link",
                )
        declared.append(tuple(sorted(members)))

    if errors:
        raise NetworkError("invalid network config:\n  - " + "\n  - ".join(errors))

    return NetworkSpec(
        vertiports=tuple(vertiports),
        od_pairs=tuple(od_pairs),
        tau=tau,
        tau_c=tau_c,
        flight_time=dict(flight_time),
        route_links=dict(route_links),
        declared_coincidences=tuple(declared),
    )


def load_network_path(path) -> NetworkSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return load_network(fh.read())


def build_slot_system(net: NetworkSpec) -> SlotSystem:
    """Lay out one slot every tau_c along each route and merge declared coincidences.

    Slot identifiers are (pair_index, position); each coincidence class is
    canonicalised to its smallest member, which is the stable representative
    used for occupancy checks.
    """
    slots = {}
    parent = {}
    for pi, pair in enumerate(net.od_pairs):
        n = net.flight_steps(pair) + 1
        ids = tuple((pi, j) for j in range(n))
        slots[pair] = ids
        for sid in ids:
            parent[sid] = sid

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for cls in net.declared_coincidences:
        root = find(cls[0])
        for sid in cls[1:]:
            r = find(sid)
            lo, hi = (root, r) if root <= r else (r, root)
            parent[hi] = lo
            root = lo

    canon = {sid: find(sid) for sid in parent}
    classes: dict = {}
    for sid in sorted(canon):
        classes.setdefault(canon[sid], []).append(sid)
    classes = {rep: tuple(members) for rep, members in classes.items()}

    return SlotSystem(
        slots=slots,
        canon=canon,
        classes=classes,
        total_distinct=len(classes),
    )
