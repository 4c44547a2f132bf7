"""Full Newton-Raphson AC power flow in polar form.

Flat start (setpoint magnitudes, zero angles), dense linear algebra
(networks here are tens of buses), no generator reactive limits: PV buses
hold their setpoint unconditionally. Demand overrides let callers re-solve
the same network for many operating points; the solve is a pure function,
safe to call concurrently.

The mismatch and Jacobian helpers are module-level so they can be checked
independently (e.g. against finite differences) without running a solve.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .network import BusKind, Network, build_admittance


class NonConvergence(RuntimeError):
    def __init__(self, iterations: int, max_mismatch: float):
        super().__init__(
            f"power flow did not converge in {iterations} iterations "
            f"(max mismatch {max_mismatch:.3e} pu)"
        )
        self.iterations = iterations
        self.max_mismatch = max_mismatch


class SingularSystem(RuntimeError):
    def __init__(self, iteration: int):
        super().__init__(f"singular Jacobian at iteration {iteration}")
        self.iteration = iteration


@dataclass
class PowerFlowSolution:
    bus_ids: tuple[int, ...]
    v_mag_pu: np.ndarray
    v_ang_rad: np.ndarray
    slack_p_mw: float
    iterations: int
    max_mismatch: float

    def v_mag_at(self, bus_id: int) -> float:
        return float(self.v_mag_pu[self.bus_ids.index(bus_id)])


def solver_indices(net: Network) -> tuple[int, np.ndarray, np.ndarray]:
    """Internal (slack, pv array, pq array) index partition."""
    slack = pv = None
    pv_list, pq_list = [], []
    for i, b in enumerate(net.buses):
        if b.kind is BusKind.SLACK:
            slack = i
        elif b.kind is BusKind.PV_GEN:
            pv_list.append(i)
        else:
            pq_list.append(i)
    return slack, np.asarray(pv_list, dtype=int), np.asarray(pq_list, dtype=int)


def demand_vectors(
    net: Network,
    p_overrides: Optional[Mapping[int, float]] = None,
    q_overrides: Optional[Mapping[int, float]] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-bus demand in MW/MVAr, case values unless overridden by bus id."""
    pd = np.array([b.p_demand_mw for b in net.buses], dtype=float)
    qd = np.array([b.q_demand_mvar for b in net.buses], dtype=float)
    for overrides, vec in ((p_overrides, pd), (q_overrides, qd)):
        if overrides:
            for bus_id, value in overrides.items():
                vec[net.bus_index(bus_id)] = value
    return pd, qd


def scheduled_injections(
    net: Network, pd_mw: np.ndarray, qd_mvar: np.ndarray
) -> np.ndarray:
    """Complex per-unit scheduled injections (fixed generation minus demand).

    Slack generation is excluded (it is the unknown); reactive generation
    only counts at PQ buses since PV buses solve for Q.
    """
    n = len(net.buses)
    pg = np.zeros(n)
    qg = np.zeros(n)
    for g in net.generators:
        if not g.status:
            continue
        i = net.bus_index(g.bus)
        if net.buses[i].kind is not BusKind.SLACK:
            pg[i] += g.p_mw
        if net.buses[i].kind is BusKind.PQ:
            qg[i] += g.q_mvar
    return ((pg - pd_mw) + 1j * (qg - qd_mvar)) / net.base_mva


def power_mismatch(
    ybus: np.ndarray,
    v: np.ndarray,
    s_spec: np.ndarray,
    pvpq: np.ndarray,
    pq: np.ndarray,
) -> np.ndarray:
    """Stacked mismatch [dP at PV+PQ, dQ at PQ] = calculated - scheduled."""
    s_calc = v * np.conj(ybus @ v)
    ds = s_calc - s_spec
    return np.concatenate([ds[pvpq].real, ds[pq].imag])


def power_flow_jacobian(
    ybus: np.ndarray,
    v: np.ndarray,
    pvpq: np.ndarray,
    pq: np.ndarray,
) -> np.ndarray:
    """Analytic Jacobian of the mismatch vector w.r.t. [angles, magnitudes]."""
    ibus = ybus @ v
    diag_v = np.diag(v)
    diag_i = np.diag(ibus)
    diag_vnorm = np.diag(v / np.abs(v))
    ds_dva = 1j * diag_v @ np.conj(diag_i - ybus @ diag_v)
    ds_dvm = diag_v @ np.conj(ybus @ diag_vnorm) + np.conj(diag_i) @ diag_vnorm
    j11 = ds_dva[np.ix_(pvpq, pvpq)].real
    j12 = ds_dvm[np.ix_(pvpq, pq)].real
    j21 = ds_dva[np.ix_(pq, pvpq)].imag
    j22 = ds_dvm[np.ix_(pq, pq)].imag
    return np.block([[j11, j12], [j21, j22]])


def solve_power_flow(
    net: Network,
    p_demand_mw: Optional[Mapping[int, float]] = None,
    q_demand_mvar: Optional[Mapping[int, float]] = None,
    tol: float = 1e-8,
    max_iter: int = 20,
    ybus: Optional[np.ndarray] = None,
) -> PowerFlowSolution:
    """Solve the AC power flow; returns magnitudes, angles, slack power.

    tol bounds the worst per-unit P/Q mismatch. The slack active power is
    the generator output at the slack bus: net injection plus local demand,
    i.e. total demand plus losses minus the other generation.
    """
    if ybus is None:
        ybus = build_admittance(net)
    slack, pv, pq = solver_indices(net)
    pvpq = np.concatenate([pv, pq])
    pd, qd = demand_vectors(net, p_demand_mw, q_demand_mvar)
    s_spec = scheduled_injections(net, pd, qd)

    n = len(net.buses)
    vm = np.ones(n)
    for i, b in enumerate(net.buses):
        if b.kind in (BusKind.SLACK, BusKind.PV_GEN):
            vm[i] = net.v_setpoint(b.id)
    va = np.zeros(n)
    v = vm * np.exp(1j * va)

    iterations = 0
    f = power_mismatch(ybus, v, s_spec, pvpq, pq)
    max_mismatch = float(np.max(np.abs(f))) if f.size else 0.0
    while max_mismatch > tol:
        if iterations >= max_iter:
            raise NonConvergence(iterations, max_mismatch)
        jac = power_flow_jacobian(ybus, v, pvpq, pq)
        try:
            dx = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            raise SingularSystem(iterations) from None
        va[pvpq] += dx[: pvpq.size]
        vm[pq] += dx[pvpq.size :]
        v = vm * np.exp(1j * va)
        iterations += 1
        f = power_mismatch(ybus, v, s_spec, pvpq, pq)
        max_mismatch = float(np.max(np.abs(f))) if f.size else 0.0

    s_calc = v * np.conj(ybus @ v)
    slack_p_mw = float(s_calc[slack].real * net.base_mva + pd[slack])
    return PowerFlowSolution(
        bus_ids=net.bus_ids,
        v_mag_pu=np.abs(v),
        v_ang_rad=np.angle(v),
        slack_p_mw=slack_p_mw,
        iterations=iterations,
        max_mismatch=max_mismatch,
    )
