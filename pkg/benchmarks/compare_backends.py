"""Time the compiled kernels against the pure-numpy fallbacks.

Runs the same operations through both backends on one generated problem and
prints a table of median wall times plus the speedup.  The numpy path exists
for portability, not speed; this script shows what the jit path buys.

    python3 benchmarks/compare_backends.py --side 128 --bs 8 --w 4 --reps 5
"""

import argparse
import statistics
import time

import numpy as np

from trilab import (CgConfig, available_backends, build_blocks, build_hbmc,
                    build_sell_factor, color_blocks, extend_with_dummies,
                    gen_laplacian_5pt, get_kernels, ic0_factorize, pcg,
                    permute_system, spmv, sub_backward_hbmc, sub_forward_hbmc)


def bench(fn, reps):
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--side", type=int, default=128,
                    help="grid side length (default 128)")
    ap.add_argument("--bs", type=int, default=8)
    ap.add_argument("--w", type=int, default=4)
    ap.add_argument("--reps", type=int, default=5)
    args = ap.parse_args()

    names = available_backends()
    if "numba" not in names:
        print("numba backend unavailable; nothing to compare against")
        return 1

    a, b = gen_laplacian_5pt(args.side, args.side)
    hl = build_hbmc(color_blocks(a, build_blocks(a, args.bs)), args.w)
    a_ext, b_ext = extend_with_dummies(a, b, hl)
    af, _ = permute_system(a_ext, b_ext, hl.composed_perm)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(a.n)
    r = rng.standard_normal(hl.n_pad)

    rows = []
    per_backend = {}
    for name in ("numba", "numpy"):
        k = get_kernels(name)
        # jit warm-up compile happens outside the timed region
        spmv(a, x, kernels=k)
        f = ic0_factorize(af, layout_tag="hbmc", kernels=k)
        sf = build_sell_factor(f, hl)
        sub_backward_hbmc(sf, hl, sub_forward_hbmc(sf, hl, r, kernels=k),
                          kernels=k)
        timings = {
            "spmv": bench(lambda: spmv(a, x, kernels=k), args.reps),
            "ic0 factorize": bench(
                lambda: ic0_factorize(af, layout_tag="hbmc", kernels=k),
                args.reps),
            "hbmc fwd+bwd": bench(
                lambda: sub_backward_hbmc(
                    sf, hl, sub_forward_hbmc(sf, hl, r, kernels=k),
                    kernels=k),
                args.reps),
            "full pcg solve": bench(
                lambda: pcg(a, b, CgConfig(ordering="hbmc", b_s=args.bs,
                                           w=args.w, spmv_format="sell"),
                            kernels=k),
                max(1, args.reps // 2)),
        }
        per_backend[name] = timings

    print(f"grid {args.side}x{args.side} (n={a.n}), bs={args.bs}, "
          f"w={args.w}, median of {args.reps}")
    print(f"{'operation':<16} {'numba':>12} {'numpy':>12} {'speedup':>9}")
    for op in per_backend["numba"]:
        tn = per_backend["numba"][op]
        tp = per_backend["numpy"][op]
        rows.append((op, tn, tp))
        print(f"{op:<16} {tn:>11.6f}s {tp:>11.6f}s {tp / tn:>8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
