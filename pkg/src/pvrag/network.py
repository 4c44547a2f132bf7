"""Power-network data model and MATPOWER-style case parsing.

The case format is the familiar text form with a baseMVA scalar and bus /
gen / branch matrices, so published cases drop in unchanged. Demands stay
in MW/MVAr on the data model; per-unit conversion happens where the maths
needs it (admittance construction and the solver).
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np


class CaseFormatError(ValueError):
    """Malformed case file; message carries the offending line."""


class NetworkError(ValueError):
    """Structurally invalid network (slack count, connectivity, bad refs)."""


class BusKind(Enum):
    PQ = 1
    PV_GEN = 2
    SLACK = 3


@dataclass(frozen=True)
class Bus:
    id: int
    kind: BusKind
    p_demand_mw: float
    q_demand_mvar: float
    gs_mw: float
    bs_mvar: float
    base_kv: float
    v_setpoint_pu: Optional[float]
    v_min_pu: float
    v_max_pu: float


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r_pu: float
    x_pu: float
    b_shunt_pu: float
    tap_ratio: float
    phase_shift_deg: float
    status: bool


@dataclass(frozen=True)
class Generator:
    bus: int
    p_mw: float
    q_mvar: float
    v_setpoint_pu: float
    status: bool


class Network:
    """Validated immutable network: buses, branches, generators, baseMVA."""

    def __init__(self, base_mva: float, buses: list[Bus], branches: list[Branch],
                 generators: list[Generator]):
        self.base_mva = float(base_mva)
        self.buses = tuple(buses)
        self.branches = tuple(branches)
        self.generators = tuple(generators)
        self._index = {b.id: i for i, b in enumerate(self.buses)}
        if len(self._index) != len(self.buses):
            raise NetworkError("duplicate bus ids")
        self._validate()

    def _validate(self) -> None:
        slack = [b for b in self.buses if b.kind is BusKind.SLACK]
        if len(slack) != 1:
            raise NetworkError(f"network must have exactly one slack bus, found {len(slack)}")
        for br in self.branches:
            if br.from_bus == br.to_bus:
                raise NetworkError(f"branch connects bus {br.from_bus} to itself")
            for end in (br.from_bus, br.to_bus):
                if end not in self._index:
                    raise NetworkError(f"branch references unknown bus {end}")
            if br.status and br.x_pu == 0.0:
                raise NetworkError(
                    f"in-service branch {br.from_bus}-{br.to_bus} has zero reactance"
                )
        gen_buses = {g.bus for g in self.generators if g.status}
        for b in self.buses:
            if b.kind in (BusKind.SLACK, BusKind.PV_GEN) and b.id not in gen_buses:
                raise NetworkError(f"bus {b.id} is a generator bus but has no generator")
        for g in self.generators:
            if g.bus not in self._index:
                raise NetworkError(f"generator references unknown bus {g.bus}")
        # Voltage setpoints at one bus must agree.
        setpoints: dict[int, float] = {}
        for g in self.generators:
            if not g.status:
                continue
            if g.v_setpoint_pu <= 0:
                raise NetworkError(f"generator at bus {g.bus} has non-positive setpoint")
            if g.bus in setpoints and abs(setpoints[g.bus] - g.v_setpoint_pu) > 1e-9:
                raise NetworkError(f"conflicting voltage setpoints at bus {g.bus}")
            setpoints[g.bus] = g.v_setpoint_pu
        self._check_connected()

    def _check_connected(self) -> None:
        n = len(self.buses)
        if n == 0:
            raise NetworkError("network has no buses")
        neighbors = self.adjacency()
        seen = {self.buses[0].id}
        stack = [self.buses[0].id]
        while stack:
            for nb in neighbors[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        if len(seen) != n:
            missing = sorted(b.id for b in self.buses if b.id not in seen)
            raise NetworkError(
                f"network is not connected over in-service branches "
                f"(unreachable buses: {missing})"
            )

    def bus_index(self, bus_id: int) -> int:
        try:
            return self._index[bus_id]
        except KeyError:
            raise NetworkError(f"unknown bus id {bus_id}") from None

    @property
    def bus_ids(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.buses)

    @property
    def slack_bus(self) -> Bus:
        return next(b for b in self.buses if b.kind is BusKind.SLACK)

    def pq_bus_ids(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.buses if b.kind is BusKind.PQ)

    def v_setpoint(self, bus_id: int) -> float:
        for g in self.generators:
            if g.status and g.bus == bus_id:
                return g.v_setpoint_pu
        raise NetworkError(f"bus {bus_id} has no voltage setpoint")

    def total_p_demand_mw(self) -> float:
        return float(sum(b.p_demand_mw for b in self.buses))

    def adjacency(self) -> dict[int, tuple[int, ...]]:
        """Bus id -> electrically adjacent bus ids over in-service branches."""
        nb: dict[int, set[int]] = {b.id: set() for b in self.buses}
        for br in self.branches:
            if not br.status:
                continue
            nb[br.from_bus].add(br.to_bus)
            nb[br.to_bus].add(br.from_bus)
        return {k: tuple(sorted(v)) for k, v in nb.items()}


# ----------------------------------------------------------------------
# Case file parsing
# ----------------------------------------------------------------------

_SCALAR_RE = re.compile(r"mpc\.baseMVA\s*=\s*([0-9.eE+-]+)\s*;")
_MATRIX_RE = re.compile(r"mpc\.(bus|gen|branch)\s*=\s*\[(.*?)\];", re.DOTALL)


def _strip_comments(text: str) -> str:
    return "\n".join(line.split("%", 1)[0] for line in text.splitlines())


def _parse_matrix(name: str, body: str, start_line: int, min_cols: int) -> list[list[float]]:
    rows = []
    for offset, line in enumerate(body.splitlines()):
        stripped = line.strip().rstrip(";").strip()
        if not stripped:
            continue
        try:
            values = [float(tok) for tok in stripped.split()]
        except ValueError as exc:
            raise CaseFormatError(
                f"{name} table, line {start_line + offset}: {exc}"
            ) from None
        if len(values) < min_cols:
            raise CaseFormatError(
                f"{name} table, line {start_line + offset}: expected at least "
                f"{min_cols} columns, found {len(values)}"
            )
        rows.append(values)
    return rows


def parse_case(path: Path | str) -> Network:
    """Parse a MATPOWER-style case file into a validated Network."""
    text = Path(path).read_text(encoding="utf-8")
    clean = _strip_comments(text)
    scalar = _SCALAR_RE.search(clean)
    if scalar is None:
        raise CaseFormatError(f"{path}: missing 'mpc.baseMVA = ...;'")
    base_mva = float(scalar.group(1))
    tables: dict[str, list[list[float]]] = {}
    for match in _MATRIX_RE.finditer(clean):
        name = match.group(1)
        start_line = clean[: match.start(2)].count("\n") + 1
        min_cols = {"bus": 13, "gen": 10, "branch": 11}[name]
        tables[name] = _parse_matrix(name, match.group(2), start_line, min_cols)
    for required in ("bus", "gen", "branch"):
        if required not in tables:
            raise CaseFormatError(f"{path}: missing 'mpc.{required}' table")

    setpoints = {int(row[0]): row[5] for row in tables["gen"] if row[7] > 0}
    buses = []
    for row in tables["bus"]:
        bus_id, bus_type = int(row[0]), int(row[1])
        try:
            kind = BusKind(bus_type)
        except ValueError:
            raise CaseFormatError(
                f"{path}: bus {bus_id}: unsupported bus type {bus_type}"
            ) from None
        buses.append(
            Bus(
                id=bus_id,
                kind=kind,
                p_demand_mw=row[2],
                q_demand_mvar=row[3],
                gs_mw=row[4],
                bs_mvar=row[5],
                base_kv=row[9],
                v_setpoint_pu=setpoints.get(bus_id),
                v_min_pu=row[12],
                v_max_pu=row[11],
            )
        )
    generators = [
        Generator(
            bus=int(row[0]),
            p_mw=row[1],
            q_mvar=row[2],
            v_setpoint_pu=row[5],
            status=row[7] > 0,
        )
        for row in tables["gen"]
    ]
    branches = [
        Branch(
            from_bus=int(row[0]),
            to_bus=int(row[1]),
            r_pu=row[2],
            x_pu=row[3],
            b_shunt_pu=row[4],
            tap_ratio=row[8] if row[8] != 0.0 else 1.0,
            phase_shift_deg=row[9],
            status=row[10] > 0,
        )
        for row in tables["branch"]
    ]
    return Network(base_mva, buses, branches, generators)


def load_bundled_case30() -> Network:
    """The 30-bus feeder fixture shipped with the package."""
    path = resources.files("pvrag").joinpath("data/case30.m")
    with resources.as_file(path) as p:
        return parse_case(p)


def build_admittance(net: Network) -> np.ndarray:
    """Dense complex bus admittance matrix (pi-model branches with taps)."""
    n = len(net.buses)
    y = np.zeros((n, n), dtype=complex)
    for br in net.branches:
        if not br.status:
            continue
        i = net.bus_index(br.from_bus)
        j = net.bus_index(br.to_bus)
        ys = 1.0 / complex(br.r_pu, br.x_pu)
        b2 = 1j * br.b_shunt_pu / 2.0
        tap = br.tap_ratio * np.exp(1j * np.deg2rad(br.phase_shift_deg))
        y[i, i] += (ys + b2) / (tap * np.conj(tap))
        y[j, j] += ys + b2
        y[i, j] += -ys / np.conj(tap)
        y[j, i] += -ys / tap
    for b in net.buses:
        k = net.bus_index(b.id)
        y[k, k] += complex(b.gs_mw, b.bs_mvar) / net.base_mva
    return y
