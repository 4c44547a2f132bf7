"""Feeder-level error-propagation simulation.

Rooftop sites with true panel-quantity intervals sit on feeder buses. For
each assessment model we perturb the true site list with seeded errors
calibrated to that model's quantity and location accuracies, aggregate
per-bus capacities, scale the fleet so the true case hits the target
penetration, and run a 96-step day of AC power flows. Net-load RMSE/MAPE
and bus voltage deviations against the true case quantify how assessment
inaccuracy propagates into feeder quantities.

Randomness is counter-based: every site derives an independent stream
from (seed, site_id), so draws do not depend on site order or on which
models are configured, and all models see the same underlying draws for a
given site (paired comparison across models).
"""
from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .descriptors import (
    QuantityInterval,
    neighbor_intervals,
    ordered_intervals,
    quantity_from_text,
    site_capacity_kw,
)
from .network import Network, build_admittance
from .powerflow import NonConvergence, solve_power_flow
from .profiles import DayProfiles, TimeGrid

TRUE_MODEL = "true"


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SiteRecord:
    site_id: str
    true_bus: int
    true_quantity: QuantityInterval

    def __post_init__(self):
        if self.true_quantity is QuantityInterval.NA:
            raise ValueError(f"site {self.site_id!r}: quantity must be non-NA")


@dataclass(frozen=True)
class PerturbedSite:
    site_id: str
    bus: int
    quantity: QuantityInterval


@dataclass(frozen=True)
class ModelAccuracy:
    """Empirical quantity and location accuracies of one assessment model."""

    quantity: float
    location: float

    def __post_init__(self):
        for name, value in (("quantity", self.quantity), ("location", self.location)):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} accuracy must be in [0, 1], got {value}")


@dataclass(frozen=True)
class ScenarioConfig:
    models: Mapping[str, ModelAccuracy] = field(default_factory=dict)
    alpha_load: float = 1.3
    penetration: float = 0.6
    per_panel_kw: float = 0.4
    under_bias: float = 0.75
    seed: int = 0
    mape_epsilon_frac: float = 0.05
    pf_tol: float = 1e-8
    pf_max_iter: int = 20

    def __post_init__(self):
        if self.alpha_load <= 1.0:
            raise ValueError("alpha_load must be > 1")
        if not 0.0 < self.penetration <= 1.0:
            raise ValueError("penetration must be in (0, 1]")
        if self.per_panel_kw <= 0.0:
            raise ValueError("per_panel_kw must be positive")
        if not 0.0 <= self.under_bias <= 1.0:
            raise ValueError("under_bias must be in [0, 1]")
        if self.mape_epsilon_frac <= 0.0:
            raise ValueError("mape_epsilon_frac must be positive")
        if TRUE_MODEL in self.models:
            raise ValueError(f"model name {TRUE_MODEL!r} is reserved")


@dataclass
class SimulationResult:
    bus_ids: tuple[int, ...]
    grid: TimeGrid
    kappa: float
    capacities_kw: dict[str, np.ndarray]
    total_capacity_mw: dict[str, float]
    net_load_mw: dict[str, np.ndarray]
    v_mag_pu: dict[str, np.ndarray]


@dataclass(frozen=True)
class SimMetrics:
    total_capacity_mw: float
    rmse_mw: Optional[float]
    mape_pct: Optional[float]


def site_draws(seed: int, site_id: str) -> np.ndarray:
    """Four uniforms for one site: keep-quantity, direction, keep-bus, pick.

    Counter-based (Philox keyed by a digest of seed and site id), so the
    stream is a pure function of (seed, site_id).
    """
    digest = hashlib.sha256(f"{seed}:{site_id}".encode("utf-8")).digest()
    key = np.frombuffer(digest[:16], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key)).random(4)


def inject_errors(
    sites: Sequence[SiteRecord],
    adjacency: Mapping[int, Sequence[int]],
    cfg: ScenarioConfig,
    accuracy: ModelAccuracy,
) -> list[PerturbedSite]:
    """Perturb quantities and bus assignments per the model's accuracies.

    Each site independently keeps its quantity with probability a_q,
    otherwise moves one interval down (probability under_bias) or up,
    reflecting at the ends of the interval order; it keeps its bus with
    probability a_l, otherwise moves to a uniformly chosen electrically
    adjacent bus.
    """
    if accuracy.location < 1.0:
        for site in sites:
            if not adjacency.get(site.true_bus):
                raise SimulationError(
                    f"site {site.site_id!r}: bus {site.true_bus} has no "
                    f"electrical neighbors but location accuracy < 1"
                )
    out = []
    for site in sites:
        u_keep_q, u_dir, u_keep_b, u_pick = site_draws(cfg.seed, site.site_id)
        quantity = site.true_quantity
        if u_keep_q >= accuracy.quantity:
            lower, upper = neighbor_intervals(quantity)
            if u_dir < cfg.under_bias:
                quantity = lower if lower is not None else upper
            else:
                quantity = upper if upper is not None else lower
        bus = site.true_bus
        if u_keep_b >= accuracy.location:
            neighbors = adjacency[site.true_bus]
            bus = neighbors[int(u_pick * len(neighbors))]
        out.append(PerturbedSite(site.site_id, bus, quantity))
    return out


@dataclass
class CapacityAllocation:
    kappa: float
    per_bus_kw: dict[str, np.ndarray]
    totals_mw: dict[str, float]


def aggregate_and_scale(
    sites_per_model: Mapping[str, Sequence[PerturbedSite]],
    net: Network,
    cfg: ScenarioConfig,
) -> CapacityAllocation:
    """Aggregate site capacities per bus and apply the penetration scaling.

    kappa makes the true fleet's peak output equal penetration *
    alpha_load * total nominal demand; all models share the same factor, so
    relocation-only errors conserve total capacity exactly.
    """
    if TRUE_MODEL not in sites_per_model:
        raise SimulationError("sites_per_model must include the 'true' model")
    n = len(net.buses)
    raw: dict[str, np.ndarray] = {}
    # Totals accumulate in site order (not via the per-bus buckets) so that
    # relocation-only perturbations conserve the total bit-exactly.
    raw_totals: dict[str, float] = {}
    for model, sites in sites_per_model.items():
        cap = np.zeros(n)
        total = 0.0
        for site in sites:
            kw = site_capacity_kw(site.quantity, cfg.per_panel_kw)
            cap[net.bus_index(site.bus)] += kw
            total += kw
        raw[model] = cap
        raw_totals[model] = total
    true_total_kw = raw_totals[TRUE_MODEL]
    if true_total_kw <= 0.0:
        raise SimulationError("cannot scale empty PV population")
    target_kw = cfg.penetration * cfg.alpha_load * net.total_p_demand_mw() * 1000.0
    kappa = target_kw / true_total_kw
    per_bus = {m: kappa * cap for m, cap in raw.items()}
    totals = {m: kappa * total / 1000.0 for m, total in raw_totals.items()}
    return CapacityAllocation(kappa=kappa, per_bus_kw=per_bus, totals_mw=totals)


def perturb_all_models(
    sites: Sequence[SiteRecord],
    net: Network,
    cfg: ScenarioConfig,
) -> dict[str, list[PerturbedSite]]:
    """True site list plus one perturbed list per configured model."""
    for site in sites:
        net.bus_index(site.true_bus)
    adjacency = net.adjacency()
    result: dict[str, list[PerturbedSite]] = {
        TRUE_MODEL: [
            PerturbedSite(s.site_id, s.true_bus, s.true_quantity) for s in sites
        ]
    }
    for model, accuracy in cfg.models.items():
        result[model] = inject_errors(sites, adjacency, cfg, accuracy)
    return result


def run_day_simulation(
    net: Network,
    sites_per_model: Mapping[str, Sequence[PerturbedSite]],
    cfg: ScenarioConfig,
    profiles: Optional[DayProfiles] = None,
    grid: Optional[TimeGrid] = None,
) -> SimulationResult:
    """Solve the 96-step day for the true case and every model.

    Per step: demands scale as alpha_load * load_shape(tau) times the
    nominal case demands, PV injection g(tau) * capacity reduces active
    demand only, and the slack injection is recorded as feeder net load.
    """
    grid = grid or TimeGrid()
    profiles = profiles or DayProfiles.default(grid)
    alloc = aggregate_and_scale(sites_per_model, net, cfg)
    n = len(net.buses)
    pd0 = np.array([b.p_demand_mw for b in net.buses])
    qd0 = np.array([b.q_demand_mvar for b in net.buses])
    bus_ids = net.bus_ids
    ybus = build_admittance(net)

    net_load: dict[str, np.ndarray] = {}
    v_mag: dict[str, np.ndarray] = {}
    for model, cap_kw in alloc.per_bus_kw.items():
        traj = np.zeros(grid.steps)
        vmat = np.zeros((n, grid.steps))
        for t in range(1, grid.steps + 1):
            tau = grid.tau_hours(t)
            scale = cfg.alpha_load * profiles.load(tau)
            pv_mw = profiles.pv(tau) * cap_kw / 1000.0
            p_net = scale * pd0 - pv_mw
            q_net = scale * qd0
            try:
                sol = solve_power_flow(
                    net,
                    p_demand_mw=dict(zip(bus_ids, p_net)),
                    q_demand_mvar=dict(zip(bus_ids, q_net)),
                    tol=cfg.pf_tol,
                    max_iter=cfg.pf_max_iter,
                    ybus=ybus,
                )
            except NonConvergence as exc:
                raise SimulationError(
                    f"power flow failed for model {model!r} at step {t}: {exc}"
                ) from exc
            traj[t - 1] = sol.slack_p_mw
            vmat[:, t - 1] = sol.v_mag_pu
        net_load[model] = traj
        v_mag[model] = vmat
    return SimulationResult(
        bus_ids=bus_ids,
        grid=grid,
        kappa=alloc.kappa,
        capacities_kw=alloc.per_bus_kw,
        total_capacity_mw=alloc.totals_mw,
        net_load_mw=net_load,
        v_mag_pu=v_mag,
    )


def rmse(traj_model: np.ndarray, traj_true: np.ndarray) -> float:
    """Root-mean-square net-load error over the day, in MW."""
    a = np.asarray(traj_model, dtype=float)
    b = np.asarray(traj_true, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"trajectory length mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def mape(
    traj_model: np.ndarray, traj_true: np.ndarray, eps_frac: float = 0.05
) -> Optional[float]:
    """Mean absolute percentage error over steps with non-negligible truth.

    Steps where |true| falls below eps_frac times the peak absolute true
    net load are excluded; returns None when no step qualifies.
    """
    a = np.asarray(traj_model, dtype=float)
    b = np.asarray(traj_true, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"trajectory length mismatch: {a.shape} vs {b.shape}")
    eps = eps_frac * float(np.max(np.abs(b)))
    if eps <= 0.0:
        return None
    mask = np.abs(b) >= eps
    if not mask.any():
        return None
    return float(100.0 * np.mean(np.abs((a[mask] - b[mask]) / b[mask])))


def voltage_deviation(v_model: np.ndarray, v_true: np.ndarray) -> np.ndarray:
    """Elementwise |V_model - V_true| over the bus x step matrix, in pu."""
    a = np.asarray(v_model, dtype=float)
    b = np.asarray(v_true, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"voltage matrix shape mismatch: {a.shape} vs {b.shape}")
    return np.abs(a - b)


def compute_metrics(result: SimulationResult,
                    cfg: ScenarioConfig) -> dict[str, SimMetrics]:
    """Per-model capacity / RMSE / MAPE table; the true row has no errors."""
    truth = result.net_load_mw[TRUE_MODEL]
    metrics: dict[str, SimMetrics] = {
        TRUE_MODEL: SimMetrics(result.total_capacity_mw[TRUE_MODEL], None, None)
    }
    for model, traj in result.net_load_mw.items():
        if model == TRUE_MODEL:
            continue
        metrics[model] = SimMetrics(
            total_capacity_mw=result.total_capacity_mw[model],
            rmse_mw=rmse(traj, truth),
            mape_pct=mape(traj, truth, cfg.mape_epsilon_frac),
        )
    return metrics


# ----------------------------------------------------------------------
# Site population I/O
# ----------------------------------------------------------------------


def generate_sites(
    net: Network,
    n: int,
    seed: int,
    quantity_weights: Optional[Sequence[float]] = None,
) -> list[SiteRecord]:
    """Synthetic site population: buses uniform over PQ buses, quantities
    drawn from the given weights (uniform over the four intervals by
    default)."""
    if n < 1:
        raise ValueError("site count must be positive")
    pq_ids = net.pq_bus_ids()
    if not pq_ids:
        raise SimulationError("network has no PQ buses to host PV sites")
    intervals = ordered_intervals()
    weights = np.asarray(
        quantity_weights if quantity_weights is not None else [1.0] * len(intervals),
        dtype=float,
    )
    if weights.shape != (len(intervals),) or weights.min() < 0 or weights.sum() == 0:
        raise ValueError("quantity_weights must be four non-negative numbers")
    rng = np.random.default_rng(seed)
    buses = rng.choice(np.asarray(pq_ids), size=n)
    qs = rng.choice(len(intervals), size=n, p=weights / weights.sum())
    return [
        SiteRecord(f"site-{i:05d}", int(buses[i]), intervals[int(qs[i])])
        for i in range(n)
    ]


SITES_COLUMNS = ("site_id", "bus", "quantity")


def load_sites(path: Path | str, net: Network) -> list[SiteRecord]:
    """Read a site file (CSV with header site_id,bus,quantity)."""
    sites = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != SITES_COLUMNS:
            raise SimulationError(
                f"{path}: header must be {','.join(SITES_COLUMNS)}"
            )
        for row in reader:
            if not row:
                continue
            if len(row) != 3:
                raise SimulationError(
                    f"{path}: line {reader.line_num}: expected 3 columns"
                )
            bus = int(row[1])
            net.bus_index(bus)
            sites.append(SiteRecord(row[0].strip(), bus, quantity_from_text(row[2])))
    return sites


def write_sites(sites: Sequence[SiteRecord], path: Path | str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SITES_COLUMNS)
        for s in sites:
            writer.writerow([s.site_id, s.true_bus, s.true_quantity.value])


# ----------------------------------------------------------------------
# Report emission
# ----------------------------------------------------------------------


def emit_simulation_report(
    result: SimulationResult,
    metrics: Mapping[str, SimMetrics],
    out_dir: Path | str,
) -> list[Path]:
    """Write netload.csv, metrics.csv and one voltage-deviation matrix per
    model; all output is deterministic for a given simulation result."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    models = [TRUE_MODEL] + [m for m in result.net_load_mw if m != TRUE_MODEL]
    written = []

    netload_path = out / "netload.csv"
    with open(netload_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "hour"] + models)
        for t in range(1, result.grid.steps + 1):
            row = [t, f"{result.grid.tau_hours(t):.2f}"]
            row += [repr(float(result.net_load_mw[m][t - 1])) for m in models]
            writer.writerow(row)
    written.append(netload_path)

    metrics_path = out / "metrics.csv"
    with open(metrics_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "total_capacity_mw", "rmse_mw", "mape_pct"])
        for model in models:
            sm = metrics[model]
            writer.writerow(
                [
                    model,
                    repr(float(sm.total_capacity_mw)),
                    "" if sm.rmse_mw is None else repr(float(sm.rmse_mw)),
                    "" if sm.mape_pct is None else repr(float(sm.mape_pct)),
                ]
            )
    written.append(metrics_path)

    truth = result.v_mag_pu[TRUE_MODEL]
    for model in models:
        if model == TRUE_MODEL:
            continue
        dev = voltage_deviation(result.v_mag_pu[model], truth)
        dev_path = out / f"voltage_dev_{model}.csv"
        with open(dev_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bus"] + [str(t) for t in range(1, result.grid.steps + 1)])
            for i, bus_id in enumerate(result.bus_ids):
                writer.writerow([bus_id] + [repr(float(x)) for x in dev[i]])
        written.append(dev_path)
    return written
