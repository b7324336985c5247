"""Throughput comparison of the jitted kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``. Pass ``--size`` to change
the triplet batch size and ``--repeats`` for more stable timings.
"""

import argparse
import time

import numpy as np

from adaptreg import _kernels


def triplet_case(rng, size, U, I, K):
    uf = rng.normal(0, 0.3, (U, K))
    itf = rng.normal(0, 0.3, (I, K))
    users = rng.integers(0, U, size)
    pos = rng.integers(0, I, size)
    neg = rng.integers(0, I, size)
    urows, u_inv = np.unique(users, return_inverse=True)
    irows, inv = np.unique(np.concatenate([pos, neg]), return_inverse=True)
    return dict(uf=uf, itf=itf, users=users, pos=pos, neg=neg,
                urows=urows, irows=irows, u_inv=u_inv,
                p_inv=inv[:size], n_inv=inv[size:])


def time_call(fn, repeats):
    fn()  # warm jit
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=100_000)
    ap.add_argument("--users", type=int, default=5_000)
    ap.add_argument("--items", type=int, default=20_000)
    ap.add_argument("--dim", type=int, default=32)
    ap.add_argument("--repeats", type=int, default=7)
    args = ap.parse_args()

    impls = _kernels.implementations()
    if "numba" not in impls:
        print("numba backend unavailable (ADAPTREG_DISABLE_NUMBA set or numba "
              "missing); nothing to compare")
        return

    rng = np.random.default_rng(0)
    c = triplet_case(rng, args.size, args.users, args.items, args.dim)
    K = args.dim
    lr, corr, b1, b2, eps = 0.01, 0.3162, 0.9, 0.999, 1e-8
    g_user = rng.normal(0, 1, (len(c["urows"]), K))
    s = np.zeros((args.users, K))
    r = np.zeros((args.users, K))
    scatter_idx = rng.integers(0, args.users * K, args.size)
    scatter_vals = rng.normal(0, 1, args.size)

    def cases(impl):
        gu = np.zeros((len(c["urows"]), K))
        gi = np.zeros((len(c["irows"]), K))
        return {
            "bpr_loss": lambda: impl["bpr_loss"](
                c["uf"], c["itf"], c["users"], c["pos"], c["neg"]),
            "bpr_grad": lambda: impl["bpr_grad"](
                c["uf"], c["itf"], c["users"], c["pos"], c["neg"],
                c["u_inv"], c["p_inv"], c["n_inv"], gu, gi),
            "sgd_step": lambda: impl["sgd_step"](
                c["uf"].copy(), c["urows"], g_user, lr),
            "adam_step": lambda: impl["adam_step"](
                c["uf"].copy(), s.copy(), r.copy(), c["urows"], g_user,
                lr, corr, b1, b2, eps),
            "scatter_add": lambda: impl["scatter_add"](
                np.zeros(args.users * K), scatter_idx, scatter_vals),
        }

    print(f"batch={args.size} users={args.users} items={args.items} dim={args.dim}")
    print(f"{'kernel':<12} {'numpy (ms)':>11} {'numba (ms)':>11} {'speedup':>8}")
    for name in ("bpr_loss", "bpr_grad", "sgd_step", "adam_step", "scatter_add"):
        t_np = time_call(cases(impls["numpy"])[name], args.repeats)
        t_nb = time_call(cases(impls["numba"])[name], args.repeats)
        print(f"{name:<12} {t_np * 1e3:>11.3f} {t_nb * 1e3:>11.3f} "
              f"{t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
