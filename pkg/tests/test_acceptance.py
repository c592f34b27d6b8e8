"""The ten acceptance criteria at their stated tolerances.

Each test appends one PASS/FAIL line that the terminal summary prints.
"""

import time
from functools import lru_cache

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES
from helpers import crandn, haar

from twrswipt import harness, metrics, precoders, twria
from twrswipt.matcore import herm, null_basis
from twrswipt.sysmodel import SystemConfig, draw_channels

pytestmark = pytest.mark.acceptance

ACC_MAX_ITER = 20_000
N_DRAWS = 200


def report(n, name, ok, detail):
    ACCEPTANCE_LINES.append(f"AC{n:02d} {'PASS' if ok else 'FAIL'}  {name}: {detail}")
    assert ok, detail


@lru_cache(maxsize=None)
def design(snr, trial, rho=0.5):
    cfg = SystemConfig.symmetric(snr_db=snr, rho=rho)
    ch = draw_channels(cfg, harness.trial_seed(0, trial))
    mi = min(harness.max_iter_for(snr), ACC_MAX_ITER)
    st = twria.run_twria(cfg, ch, seed=harness.trial_seed(0, trial), max_iter=mi)
    return cfg, ch, st


def bootstrap_share(diffs, sign, n_boot=4000, seed=0):
    """Share of bootstrap means of ``diffs`` with the requested sign."""
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, diffs.size, (n_boot, diffs.size))
    means = diffs[idx].mean(axis=1)
    return float(np.mean(sign * means >= 0))


def test_ac01_cd_decomposition():
    t0 = time.perf_counter()
    worst = [0.0, 0.0, 0.0]
    rng = np.random.default_rng(1)
    for M, d in ((4, 2), (6, 2), (6, 3)):
        for _ in range(1000):
            V, Vh = haar(rng, M, d), haar(rng, M, d)
            f = precoders.cd_decompose(V, Vh)
            worst[0] = max(worst[0], np.linalg.norm(V - f.assemble(Vh, null_basis(Vh))))
            worst[1] = max(worst[1], abs(np.linalg.norm(f.Z) ** 2 - precoders.chordal_distance_sq(V, Vh)))
            worst[2] = max(worst[2], np.linalg.norm(herm(f.Y) @ f.Y + herm(f.Z) @ f.Z - np.eye(d)))
    dt = time.perf_counter() - t0
    ok = max(worst) < 1e-10 and dt < 10
    report(1, "CD decomposition", ok,
           f"recon {worst[0]:.1e}, trace {worst[1]:.1e}, YZ {worst[2]:.1e}, {dt:.1f} s")


def test_ac02_rotation_invariance():
    cfg, ch, st = design(17.0, 0)
    V = np.asarray(st.V)
    q0 = metrics.harvested_energy(cfg, ch, V)
    r0 = metrics.user_rates(cfg, ch, twria.recompute_combiners(cfg, ch, V))
    rng = np.random.default_rng(2)
    dq = dr = 0.0
    for _ in range(100):
        Q = np.stack([haar(rng, cfg.d, cfg.d) for _ in range(cfg.n_users)])
        Vq = np.einsum("jmd,jde->jme", V, Q)
        dq = max(dq, abs(metrics.harvested_energy(cfg, ch, Vq) - q0))
        r = metrics.user_rates(cfg, ch, twria.recompute_combiners(cfg, ch, Vq))
        dr = max(dr, float(np.max(np.abs(r - r0))))
    report(2, "rotation invariance", dq < 1e-9 and dr < 1e-9, f"max |dQ_r| {dq:.1e}, max |dR_k| {dr:.1e}")


def test_ac03_twria_convergence():
    cfg = SystemConfig.symmetric(snr_db=8.5)
    ch = draw_channels(cfg, harness.trial_seed(0, 0))
    good = mono = 0
    leaks = []
    for t in range(32):
        st = twria.run_twria(cfg, ch, seed=harness.trial_seed(0, t), max_iter=2000)
        tr = np.asarray(st.trace)
        is_mono = bool(np.all(np.diff(tr) <= 1e-9 * tr[:-1]))
        leak = twria.leakage(cfg, ch, st)
        leaks.append(leak)
        mono += is_mono
        good += is_mono and leak < 1e-3 and st.converged
    report(3, "TWR-IA at 8.5 dB", good >= 30,
           f"{good}/32 monotone with leakage < 1e-3 ({mono}/32 monotone, "
           f"leakage {min(leaks):.3g}..{max(leaks):.3g})")


def test_ac04_energy_sandwich():
    bad = 0
    worst = np.inf
    for snr in (17.0, 25.0):
        for t in range(N_DRAWS):
            cfg, ch, st = design(snr, t)
            Vb, res = precoders.balanced_set(ch.H_up, st.V, 0.1)
            lo, up = metrics.energy_bounds(cfg, ch, st.V, 0.1, np.stack([r.null_slice for r in res]))
            q = metrics.harvested_energy(cfg, ch, Vb)
            bad += not (lo - 1e-9 <= q <= up + 1e-9)
            worst = min(worst, q - lo, up - q)
    report(4, "harvested-energy sandwich", bad == 0,
           f"{bad} violations over {2 * N_DRAWS} draws, min margin {worst:.3g}")


def test_ac05_rate_loss_audit():
    parts, ok = [], True
    for snr in (17.0, 25.0):
        for z in (0.05, 0.1):
            loss, bound = [], []
            for t in range(N_DRAWS):
                cfg, ch, st = design(snr, t)
                r_ia = metrics.user_rates(cfg, ch, twria.recompute_combiners(cfg, ch, st.V))
                Vb, _ = precoders.balanced_set(ch.H_up, st.V, z)
                r_b = metrics.user_rates(cfg, ch, twria.recompute_combiners(cfg, ch, Vb))
                loss.append(np.mean(r_ia - r_b))
                bound.append(np.mean([metrics.rate_loss_bound(cfg, z, k) for k in range(cfg.n_users)]))
            lm, bm = float(np.mean(loss)), float(np.mean(bound))
            ok &= lm <= bm
            parts.append(f"{snr:g}dB z={z:g}: {lm:.3f}<={bm:.3f}")
    report(5, "rate-loss bound audit", ok, "; ".join(parts))


def test_ac06_tradeoff_trend():
    zs = (0.0, 0.05, 0.1, 0.15)
    Q, R = [], []
    for t in range(100):
        cfg, ch, st = design(25.0, t)
        zeh = min(precoders.z_eh(v, precoders.eh_max_precoder(H, cfg.d)) for H, v in zip(ch.H_up, st.V))
        if zeh <= zs[-1]:
            continue
        q_row, r_row = [], []
        for z in zs:
            V = np.asarray(st.V) if z == 0 else precoders.balanced_set(ch.H_up, st.V, z)[0]
            rate, energy, _ = metrics.evaluate(cfg, ch, V)
            q_row.append(energy)
            r_row.append(rate)
        Q.append(q_row)
        R.append(r_row)
    Q, R = np.array(Q), np.array(R)
    conf = []
    for i in range(len(zs) - 1):
        conf.append(bootstrap_share(Q[:, i + 1] - Q[:, i], +1, seed=i))
        conf.append(bootstrap_share(R[:, i + 1] - R[:, i], -1, seed=10 + i))
    ok = len(Q) > 0 and min(conf) >= 0.95
    report(6, "energy/rate trade-off", ok,
           f"{len(Q)} draws with z_EH > 0.15; mean Q_r {np.round(Q.mean(0), 1).tolist()}, "
           f"mean rate {np.round(R.mean(0), 2).tolist()}, min confidence {min(conf):.3f}")


def test_ac07_lambda1():
    rng = np.random.default_rng(7)
    lam = [np.linalg.eigvalsh(herm(H) @ H)[-1] for H in (crandn(rng, 6, 2) for _ in range(2000))]
    ref = metrics.expected_lambda1(6, 2)
    err = abs(np.mean(lam) - ref) / ref
    report(7, "lambda_1 approximation", err < 0.10,
           f"mean {np.mean(lam):.3f} vs {ref:.3f} ({100 * err:.1f}%), H in C^(6x2)")


def test_ac08_ser_trends(tmp_path):
    sc = harness.default_scenario("ser_vs_snr", snr_list=(10.0, 15.0, 17.0, 20.0, 25.0),
                                  z_list=(0.0, 0.1), max_iter=ACC_MAX_ITER,
                                  output_path=str(tmp_path / "ser.csv"))
    harness.run_scenario(sc, SystemConfig())
    rows = np.genfromtxt(sc.output_path, delimiter=",", names=True, dtype=None, encoding=None)
    ser = {(float(r["snr_db"]), str(r["method"])): float(r["ser"]) for r in rows}
    z0 = [ser[(s, "twria")] for s in (10.0, 15.0, 20.0, 25.0)]
    z1 = {s: ser[(s, "balanced")] for s in (15.0, 17.0, 20.0, 25.0)}
    mono = bool(np.all(np.diff(z0) <= 0))
    sat = z1[25.0] >= z1[17.0] / 3
    order = all(ser[(s, "twria")] <= z1[s] for s in (15.0, 20.0, 25.0))
    report(8, "SER trends", mono and sat and order,
           f"z=0 {['%.2e' % v for v in z0]}; z=0.1 17/25 dB {z1[17.0]:.2e}/{z1[25.0]:.2e}; "
           f"monotone {mono}, saturation {sat}, ordering {order}")


def test_ac09_alternation_convergence():
    ok = 0
    rng = np.random.default_rng(9)
    for _ in range(200):
        H, V = crandn(rng, 6, 6), haar(rng, 6, 2)
        obj = precoders.balanced_decomposition(H, V, 0.1, n_iter=8).objective
        ok += bool(np.any(np.abs(np.diff(obj)) < 1e-6 * np.abs(obj[1:])))
    report(9, "balanced alternation convergence", ok >= 190, f"{ok}/200 settle below 1e-6 within 8 alternations")


def test_ac10_determinism(tmp_path):
    fast = {
        "convergence": dict(snr_list=[8.5], trials=2, max_iter=100),
        "sumrate_vs_snr": dict(snr_list=[15.0], trials=2, max_iter=500),
        "rate_energy_region": dict(snr_list=[15.0], trials=1, max_iter=500, rho_grid=(0.0, 0.3, 0.6)),
        "rate_energy_vs_z": dict(snr_list=[15.0], trials=2, max_iter=500),
        "ser_vs_snr": dict(snr_list=[15.0], trials=1, max_iter=500, n_symbols=2000),
        "bounds_audit": dict(snr_list=[17.0], trials=2, max_iter=500),
    }
    same = []
    for name, kw in fast.items():
        out = []
        for tag in "ab":
            sc = harness.default_scenario(name, seed=5, output_path=str(tmp_path / f"{name}_{tag}.csv"), **kw)
            out.append(harness.run_scenario(sc, SystemConfig()).path.read_bytes())
        same.append(out[0] == out[1])
    report(10, "determinism", all(same), f"{sum(same)}/{len(same)} scenarios byte-identical")
