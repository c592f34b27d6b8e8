"""Compare the compiled and numpy backends on the TWR-IA hot paths.

Run with ``python benchmarks/bench_kernels.py [--sweeps N] [--repeat R]``.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from twrswipt import _backend, sysmodel, twria


def _bench(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--sweeps", type=int, default=500)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--snr", type=float, default=17.0)
    args = p.parse_args(argv)

    cfg = sysmodel.SystemConfig.symmetric(snr_db=args.snr)
    ch = sysmodel.draw_channels(cfg, 0)
    rng = np.random.default_rng(0)
    A = rng.standard_normal((6, 2)) + 1j * rng.standard_normal((6, 2))
    G = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    G = G.conj().T @ G

    names = _backend.available()
    print(f"backends: {', '.join(names)} (default {_backend.NAME})")
    print(f"{'kernel':<28}" + "".join(f"{n:>14}" for n in names))
    rows = {
        f"twria {args.sweeps} sweeps [s]": lambda k: _bench(
            lambda: twria.run_twria(cfg, ch, seed=1, max_iter=args.sweeps, tol=0.0, backend=k),
            args.repeat),
        "orthonormalize 6x2 [us]": lambda k: 1e6 * _bench(
            lambda: [_backend.load(k).orthonormalize(A) for _ in range(1000)], args.repeat) / 1000,
        "eigh 6x6 [us]": lambda k: 1e6 * _bench(
            lambda: [_backend.load(k).eigh(G) for _ in range(1000)], args.repeat) / 1000,
    }
    for label, run in rows.items():
        vals = [run(n) for n in names]
        line = f"{label:<28}" + "".join(f"{v:>14.4g}" for v in vals)
        if len(vals) == 2:
            line += f"   speedup x{vals[1] / vals[0]:.1f}"
        print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
