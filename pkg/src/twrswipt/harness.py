"""Seeded Monte Carlo scenarios that write CSV tables.

Every trial draws its own channel realization from ``(seed, trial)`` and
results are merged in trial order, so the CSV does not depend on the number
of worker processes (``TWRSWIPT_WORKERS``, default 1).

SNR is ``10 log10(P / sigma^2)`` with ``P = P_j = P_r`` for every user.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics, precoders, sermc, twria
from .matcore import qr_positive
from .sysmodel import SystemConfig, crandn, draw_channels, substream

SCENARIOS = (
    "convergence",
    "sumrate_vs_snr",
    "rate_energy_region",
    "rate_energy_vs_z",
    "ser_vs_snr",
    "bounds_audit",
)

COLUMNS = {
    "convergence": ("snr_db", "seed", "iter", "mse", "leakage", "sum_rate"),
    "sumrate_vs_snr": ("snr_db", "method", "z", "mean_sum_rate", "std"),
    "rate_energy_region": ("snr_db", "rho", "method", "z", "mean_rate", "mean_energy"),
    "rate_energy_vs_z": ("snr_db", "z", "mean_rate", "mean_energy", "lemma3_lower", "lemma3_upper"),
    "ser_vs_snr": ("snr_db", "method", "z", "ser"),
    "bounds_audit": (
        "trial", "snr_db", "z", "Q_r", "lower", "upper", "lower_random_null",
        "rate_loss", "lemma2_bound", "lemma3_ok", "lemma2_ok",
    ),
}

_DEFAULTS = {
    "convergence": dict(snr_list=(8.5, 17.0, 25.0), z_list=(0.0,), trials=32, rho=0.0),
    "sumrate_vs_snr": dict(snr_list=(0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0), z_list=(0.0, 0.1),
                           trials=20, rho=0.0),
    "rate_energy_region": dict(snr_list=(25.0,), z_list=(0.0, 0.1), trials=20, rho=0.0),
    "rate_energy_vs_z": dict(snr_list=(25.0,), z_list=tuple(np.round(np.arange(0, 0.301, 0.025), 4)),
                             trials=20, rho=0.5),
    "ser_vs_snr": dict(snr_list=(10.0, 15.0, 20.0, 25.0), z_list=(0.0, 0.1), trials=20, rho=0.0),
    "bounds_audit": dict(snr_list=(17.0, 25.0), z_list=(0.05, 0.1), trials=200, rho=0.5),
}

SLACK = 1e-9
STREAM_NULL = 4


def max_iter_for(snr_db: float) -> int:
    """Sweep cap growing with SNR, matching the iteration counts alignment needs."""
    if snr_db <= 10.0:
        return 2_000
    if snr_db <= 20.0:
        return 20_000
    return 200_000


def trial_seed(seed: int, trial: int) -> int:
    """64-bit seed of one Monte Carlo trial."""
    return int(np.random.SeedSequence([int(seed), int(trial)]).generate_state(1, np.uint64)[0])


def fmt(x) -> str:
    """17-significant-digit rendering used for every CSV number."""
    if x is None:
        return "nan"
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


@dataclass(frozen=True)
class Scenario:
    """One experiment sweep.

    ``rho`` is the operating splitting ratio; ``None`` keeps the scenario
    default. ``max_iter = None`` selects :func:`max_iter_for` per SNR.
    """

    name: str
    snr_list: tuple = ()
    z_list: tuple = ()
    trials: int = 1
    seed: int = 0
    output_path: str | None = None
    max_iter: int | None = None
    tol: float = twria.DEFAULT_TOL
    balanced_users: str = "all"
    rho: float | None = None
    n_symbols: int = 20_000
    n_iter: int = precoders.DEFAULT_N_ITER
    rho_grid: tuple = field(default_factory=lambda: tuple(np.round(np.arange(0.0, 1.0, 0.01), 10)))
    trace_every: int = 0

    def validate(self, cfg: SystemConfig):
        if self.name not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.name!r}; choose from {SCENARIOS}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.snr_list or not all(math.isfinite(s) for s in self.snr_list):
            raise ValueError("snr values must be finite and non-empty")
        if any(not 0.0 <= z <= cfg.d for z in self.z_list):
            raise ValueError(f"z values must lie in [0, d={cfg.d}]")
        if self.balanced_users not in ("all", "one"):
            raise ValueError("balanced_users must be 'all' or 'one'")
        if self.rho is not None and not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")


def default_scenario(name: str, **overrides) -> Scenario:
    """Scenario with its preset SNR list, budgets, trial count and ``rho``."""
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; choose from {SCENARIOS}")
    base = dict(_DEFAULTS[name])
    base.update({k: v for k, v in overrides.items() if v is not None})
    base["snr_list"] = tuple(float(s) for s in base["snr_list"])
    base["z_list"] = tuple(float(z) for z in base["z_list"])
    return Scenario(name=name, **base)


@dataclass(frozen=True)
class RunResult:
    path: Path
    ok: bool
    rows: int


# --------------------------------------------------------------------------
# per-trial work


def _design(cfg, ch, sc, snr, trial):
    mi = sc.max_iter if sc.max_iter is not None else max_iter_for(snr)
    return twria.run_twria(cfg, ch, seed=trial_seed(sc.seed, trial), max_iter=mi, tol=sc.tol)


def _methods(sc):
    out = [("twria", 0.0)]
    out += [("balanced", z) for z in sc.z_list if z > 0]
    out.append(("eh_max", None))
    return out


def _precoders_for(method, z, ch, state, cfg, sc):
    if method == "twria":
        return np.asarray(state.V), None
    if method == "eh_max":
        return np.stack([precoders.eh_max_precoder(H, cfg.d) for H in ch.H_up]), None
    return precoders.balanced_set(ch.H_up, state.V, z, n_iter=sc.n_iter, users=sc.balanced_users)


def _log_points(max_iter, every):
    if every > 0:
        return None
    pts = set(range(1, 101))
    pts.update(int(round(x)) for x in np.logspace(2, math.log10(max(max_iter, 100)), 200))
    return pts


def _trial_convergence(cfg, sc, trial):
    ch = draw_channels(cfg, trial_seed(sc.seed, 0))
    F = ch.cascade()
    rows = []
    for snr in sc.snr_list:
        c = cfg.with_snr(snr)
        mi = sc.max_iter if sc.max_iter is not None else max_iter_for(snr)
        keep = _log_points(mi, sc.trace_every)
        last = None
        for st in twria.iterate_twria(c, ch, seed=trial_seed(sc.seed, trial), max_iter=mi, tol=sc.tol):
            last = st
            it = st.iterations
            if st.converged or it == mi or (it in keep if keep is not None else it % sc.trace_every == 0):
                rows.append((snr, trial, it, st.mse, twria.leakage(c, ch, st, F),
                             metrics.sum_rate(c, ch, st, F)))
        if last is not None and rows[-1][2] != last.iterations:
            rows.append((snr, trial, last.iterations, last.mse, twria.leakage(c, ch, last, F),
                         metrics.sum_rate(c, ch, last, F)))
    return rows


def _trial_sumrate(cfg, sc, trial):
    ch = draw_channels(cfg, trial_seed(sc.seed, trial))
    out = {}
    for snr in sc.snr_list:
        c = cfg.with_snr(snr)
        st = _design(c, ch, sc, snr, trial)
        for method, z in _methods(sc):
            V, _ = _precoders_for(method, z, ch, st, c, sc)
            out[(snr, method, z)] = metrics.evaluate(c, ch, V)[0]
    return out


def _trial_region(cfg, sc, trial):
    ch = draw_channels(cfg, trial_seed(sc.seed, trial))
    out = {}
    for snr in sc.snr_list:
        c = cfg.with_snr(snr)
        st = _design(c, ch, sc, snr, trial)
        for method, z in _methods(sc):
            V, _ = _precoders_for(method, z, ch, st, c, sc)
            for rho in sc.rho_grid:
                rate, energy, _ = metrics.evaluate(c.replace(rho=float(rho)), ch, V)
                out[(snr, float(rho), method, z)] = (rate, energy)
    return out


def _trial_vs_z(cfg, sc, trial):
    ch = draw_channels(cfg, trial_seed(sc.seed, trial))
    out = {}
    for snr in sc.snr_list:
        c = cfg.with_snr(snr)
        st = _design(c, ch, sc, snr, trial)
        for z in sc.z_list:
            V, res = precoders.balanced_set(ch.H_up, st.V, z, n_iter=sc.n_iter,
                                            users=sc.balanced_users)
            zv = precoders.user_budgets(z, c.n_users, sc.balanced_users)
            Vn = np.stack([r.null_slice for r in res])
            lo, up = metrics.energy_bounds(c, ch, st.V, zv, Vn)
            rate, energy, _ = metrics.evaluate(c, ch, V)
            out[(snr, z)] = (rate, energy, lo, up)
    return out


def _trial_ser(cfg, sc, trial):
    ch = draw_channels(cfg, trial_seed(sc.seed, trial))
    out = {}
    for snr in sc.snr_list:
        c = cfg.with_snr(snr)
        st = _design(c, ch, sc, snr, trial)
        for method, z in _methods(sc):
            V, _ = _precoders_for(method, z, ch, st, c, sc)
            state = twria.recompute_combiners(c, ch, V)
            out[(snr, method, z)] = sermc.simulate_ser(c, ch, state, sc.n_symbols,
                                                       seed=trial_seed(sc.seed + 1, trial))
    return out


def random_null_slice(Vnull, d, rng):
    """Haar-random ``d``-dimensional slice of the span of ``Vnull``."""
    Q = qr_positive(crandn(rng, (Vnull.shape[1], d)))[0]
    return Vnull @ Q


def _trial_audit(cfg, sc, trial):
    ch = draw_channels(cfg, trial_seed(sc.seed, trial))
    out = {}
    for snr in sc.snr_list:
        c = cfg.with_snr(snr)
        st = _design(c, ch, sc, snr, trial)
        r_ia = metrics.user_rates(c, ch, twria.recompute_combiners(c, ch, st.V))
        for z in sc.z_list:
            zv = precoders.user_budgets(z, c.n_users, sc.balanced_users)
            V, res = precoders.balanced_set(ch.H_up, st.V, z, n_iter=sc.n_iter,
                                            users=sc.balanced_users)
            q = metrics.harvested_energy(c, ch, V)
            lo, up = metrics.energy_bounds(c, ch, st.V, zv, np.stack([r.null_slice for r in res]))
            rng = substream(trial_seed(sc.seed, trial), STREAM_NULL, int(round(z * 1e6)))
            Vr = np.stack([random_null_slice(r.Vnull, c.d, rng) for r in res])
            lo_r, _ = metrics.energy_bounds(c, ch, st.V, zv, Vr)
            r_bal = metrics.user_rates(c, ch, twria.recompute_combiners(c, ch, V))
            loss = float(np.mean(r_ia - r_bal))
            bound = float(np.mean([metrics.rate_loss_bound(c, zv, k) for k in range(c.n_users)]))
            out[(snr, z)] = (q, lo, up, lo_r, loss, bound)
    return out


_TRIALS = {
    "convergence": _trial_convergence,
    "sumrate_vs_snr": _trial_sumrate,
    "rate_energy_region": _trial_region,
    "rate_energy_vs_z": _trial_vs_z,
    "ser_vs_snr": _trial_ser,
    "bounds_audit": _trial_audit,
}


def _run_trial(args):
    cfg, sc, trial = args
    return _TRIALS[sc.name](cfg, sc, trial)


def workers_from_env() -> int:
    raw = os.environ.get("TWRSWIPT_WORKERS", "1").strip() or "1"
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"TWRSWIPT_WORKERS must be an integer, got {raw!r}") from exc
    return max(n, 1)


def _map_trials(cfg, sc, workers):
    jobs = [(cfg, sc, t) for t in range(sc.trials)]
    if workers <= 1 or sc.trials == 1:
        return [_run_trial(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_trial, jobs))


# --------------------------------------------------------------------------
# aggregation


def _mean_std(values):
    a = np.asarray(values, dtype=float)
    return float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0


def _aggregate(sc, results):
    name = sc.name
    ok = True
    rows = []
    if name == "convergence":
        for r in results:
            rows.extend(r)
        rows.sort(key=lambda row: (sc.snr_list.index(row[0]), row[1], row[2]))
    elif name in ("sumrate_vs_snr", "ser_vs_snr"):
        for key in results[0]:
            vals = [r[key] for r in results]
            if name == "sumrate_vs_snr":
                rows.append((*key, *_mean_std(vals)))
            else:
                rows.append((*key, float(np.mean(vals))))
    elif name == "rate_energy_region":
        for key in results[0]:
            vals = np.array([r[key] for r in results])
            rows.append((*key, *vals.mean(axis=0)))
    elif name == "rate_energy_vs_z":
        for key in results[0]:
            vals = np.array([r[key] for r in results])
            rows.append((*key, *vals.mean(axis=0)))
    elif name == "bounds_audit":
        for key in results[0]:
            losses, bounds = [], []
            for t, r in enumerate(results):
                q, lo, up, lo_r, loss, bound = r[key]
                losses.append(loss)
                bounds.append(bound)
                tol = SLACK * max(1.0, abs(up))
                l3 = bool(lo - tol <= q <= up + tol)
                l2 = bool(np.mean(losses) <= np.mean(bounds) + SLACK)
                ok &= l3 and (l2 or t + 1 < sc.trials)
                rows.append((t, key[0], key[1], q, lo, up, lo_r, loss, bound, l3, l2))
        rows.sort(key=lambda row: (row[0], sc.snr_list.index(row[1]), sc.z_list.index(row[2])))
    return rows, ok


def run_scenario(sc: Scenario, cfg: SystemConfig, workers: int | None = None) -> RunResult:
    """Run every trial of ``sc`` and write its CSV.

    The split ratio of ``cfg`` is replaced by ``sc.rho`` when that is set.
    Audit scenarios report ``ok = False`` when any flag fails; the rate-loss bound is an
    expectation bound, so its flag compares running means and only the final
    running mean counts towards ``ok``.
    """
    cfg.validate()
    sc.validate(cfg)
    if sc.rho is not None:
        cfg = cfg.replace(rho=sc.rho)
    workers = workers_from_env() if workers is None else workers
    path = Path(sc.output_path or f"{sc.name}.csv")
    results = _map_trials(cfg, sc, workers)
    rows, ok = _aggregate(sc, results)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS[sc.name])
            for row in rows:
                w.writerow([fmt(x) for x in row])
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return RunResult(path=path, ok=ok, rows=len(rows))


__all__ = [
    "SCENARIOS", "COLUMNS", "Scenario", "RunResult", "default_scenario", "run_scenario",
    "max_iter_for", "trial_seed", "fmt", "workers_from_env", "random_null_slice",
]
