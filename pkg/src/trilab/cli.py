"""tri-lab command line: gen | reorder | solve | bench | check.

Exit codes: 0 success (and converged, for solve), 1 setup/ingestion failure,
2 usage error or non-converged solve.  Thread count comes from --threads,
falling back to the TRILAB_THREADS environment variable, then to the
machine's logical core count.
"""

import argparse
import csv
import json
import os
import statistics
import sys

import numpy as np

from .io import IngestionError, load_matrix, write_matrix_market
from .matrix import gen_laplacian_5pt, gen_random_spd, permute_system, spmv
from .ordering import (build_blocks, build_hbmc, check_er_condition,
                       check_level2_structure, color_blocks,
                       extend_with_dummies, greedy_color_nodes)
from .precond import (BarrierCounter, IcBreakdownError, WorkerPool,
                      build_sell_factor, ic0_factorize, sub_backward_bmc,
                      sub_backward_hbmc, sub_backward_mc, sub_backward_seq,
                      sub_forward_bmc, sub_forward_hbmc, sub_forward_mc,
                      sub_forward_seq)
from .solver import CgBreakdownError, CgConfig, SolveReport, pcg


def _default_threads():
    env = os.environ.get("TRILAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _add_common(p, ordering=True):
    p.add_argument("--matrix", required=True, help="matrix file (.mtx or binary cache)")
    if ordering:
        p.add_argument("--ordering", choices=("natural", "mc", "bmc", "hbmc"),
                       default="natural")
    p.add_argument("--bs", type=int, default=4, help="block size (default 4)")
    p.add_argument("--w", type=int, default=4, help="interleave width (default 4)")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--backend", choices=("numba", "numpy"), default=None,
                   help="kernel backend override (default: TRILAB_BACKEND or auto)")


def _apply_backend(args):
    if getattr(args, "backend", None):
        os.environ["TRILAB_BACKEND"] = args.backend


def _threads(args):
    return args.threads if args.threads else _default_threads()


def build_parser():
    ap = argparse.ArgumentParser(prog="tri-lab",
                                 description="sparse triangular-solve laboratory")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a generated test matrix")
    g.add_argument("generator", help="laplacian5pt NX NY | randspd N DENSITY SEED")
    g.add_argument("params", nargs="*", help="generator parameters")
    g.add_argument("--out", required=True, help="output .mtx path")

    r = sub.add_parser("reorder", help="build an ordering and dump stats")
    _add_common(r)
    r.add_argument("--out", default=None, help="write the layout dump here")

    s = sub.add_parser("solve", help="run preconditioned CG")
    _add_common(s)
    s.add_argument("--shift", type=float, default=0.0)
    s.add_argument("--tol", type=float, default=1e-7)
    s.add_argument("--max-iters", type=int, default=50000)
    s.add_argument("--format", choices=("crs", "sell"), default="crs")
    s.add_argument("--out", default=None, help="also write the JSON report here")

    b = sub.add_parser("bench", help="run a benchmark plan, emit CSV")
    b.add_argument("--plan", required=True, help="JSON benchmark plan")
    b.add_argument("--out", default=None, help="CSV output (overrides plan)")
    b.add_argument("--warmup", type=int, default=0,
                   help="unrecorded repetitions per config before timing")
    b.add_argument("--threads", type=int, default=None)
    b.add_argument("--backend", choices=("numba", "numpy"), default=None)

    c = sub.add_parser("check", help="run the ordering/kernel property suite")
    _add_common(c, ordering=False)
    c.add_argument("--corrupt-perm", action="store_true",
                   help=argparse.SUPPRESS)  # fault-injection hook for tests
    return ap


def cmd_gen(args, parser):
    name = args.generator
    p = args.params
    try:
        if name == "laplacian5pt":
            if len(p) != 2:
                parser.error("laplacian5pt needs NX NY")
            nx, ny = int(p[0]), int(p[1])
            if nx < 2 or ny < 2:
                parser.error("laplacian5pt sides must be at least 2")
            a, _ = gen_laplacian_5pt(nx, ny)
            meta = {"generator": name, "nx": nx, "ny": ny}
        elif name == "randspd":
            if len(p) != 3:
                parser.error("randspd needs N DENSITY SEED")
            n, density, seed = int(p[0]), float(p[1]), int(p[2])
            if n < 1 or density <= 0:
                parser.error("randspd needs positive N and DENSITY")
            a = gen_random_spd(n, density, seed)
            meta = {"generator": name, "n": n, "density": density, "seed": seed}
        else:
            parser.error(f"unknown generator {name!r}")
    except ValueError as e:
        parser.error(str(e))
    write_matrix_market(args.out, a, comment=f"generated by tri-lab gen {name}")
    meta.update(n=a.n, nnz_full=a.nnz)
    with open(args.out + ".json", "w") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")
    print(f"wrote {args.out} (n={a.n}, nnz={a.nnz}) and {args.out}.json")
    return 0


def _load(args):
    try:
        return load_matrix(args.matrix)
    except (IngestionError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return None


def cmd_reorder(args, parser):
    _apply_backend(args)
    a = _load(args)
    if a is None:
        return 1
    if args.bs > a.n:
        print(f"warning: b_s={args.bs} exceeds n={a.n}; expect a single block per component",
              file=sys.stderr)
    lines = [f"matrix: {args.matrix}  n={a.n}  nnz={a.nnz}"]
    if args.ordering == "natural":
        lines.append("ordering: natural (identity; nothing to build)")
    elif args.ordering == "mc":
        col = greedy_color_nodes(a)
        lines.append("ordering: mc")
        lines.append(f"n_c={col.n_c}")
        lines.append(f"n(c)={np.diff(col.color_ranges).tolist()}")
    else:
        blocking = build_blocks(a, args.bs)
        lay = color_blocks(a, blocking)
        undersized = sum(1 for blk in blocking.blocks if blk.shape[0] < args.bs)
        lines.append(f"ordering: {args.ordering}  b_s={args.bs}"
                     + (f"  w={args.w}" if args.ordering == "hbmc" else ""))
        lines.append(f"blocks: {blocking.n_blocks} ({undersized} undersized)")
        lines.append(f"n_c={lay.n_c}")
        lines.append(f"n(c)={lay.n_of.tolist()}")
        if args.ordering == "hbmc":
            hl = build_hbmc(lay, args.w)
            a_ext, _ = extend_with_dummies(a, np.zeros(a.n), hl)
            a_pad, _ = permute_system(a_ext, np.zeros(hl.n_pad), hl.padded_perm)
            er = check_er_condition(a_pad, hl.perm)
            lines.append(f"nbar(c)={hl.nbar_of.tolist()}")
            lines.append(f"dummies: {hl.n_dummy}")
            lines.append("ER condition: holds" if er.holds else
                         f"ER condition: VIOLATED ({er.n_violations} pairs)")
    text = "\n".join(lines)
    print(text)
    if args.out:
        _write_layout_dump(args, a)
        print(f"layout dump written to {args.out}")
    return 0


def _write_layout_dump(args, a):
    """One line per node: original index, color, block, level-1 block, final position."""
    n = a.n
    color = np.zeros(n, dtype=np.int64)
    block = np.full(n, -1, dtype=np.int64)
    lvl1 = np.full(n, -1, dtype=np.int64)
    if args.ordering == "natural":
        pos = np.arange(n, dtype=np.int64)
    elif args.ordering == "mc":
        col = greedy_color_nodes(a)
        color = col.color_of
        pos = col.perm.new_of_old
    else:
        blocking = build_blocks(a, args.bs)
        lay = color_blocks(a, blocking)
        block = blocking.block_of
        color = lay.color_of_block[blocking.block_of]
        if args.ordering == "bmc":
            pos = lay.perm.new_of_old
        else:
            hl = build_hbmc(lay, args.w)
            pos = hl.composed_perm.new_of_old[:n]
            lvl1 = pos // (hl.b_s * hl.w)
    with open(args.out, "w") as f:
        f.write("# orig color block lvl1 pos\n")
        for i in range(n):
            f.write(f"{i} {color[i]} {block[i]} {lvl1[i]} {pos[i]}\n")


def _report_json(report: SolveReport):
    return json.dumps(report.to_json_dict(), indent=2)


def cmd_solve(args, parser):
    _apply_backend(args)
    a = _load(args)
    if a is None:
        return 1
    b = spmv(a, np.ones(a.n))
    cfg = CgConfig(tol=args.tol, max_iters=args.max_iters,
                   ordering=args.ordering, b_s=args.bs, w=args.w,
                   shift=args.shift, threads=_threads(args),
                   spmv_format=args.format)
    try:
        _, report = pcg(a, b, cfg, matrix_name=os.path.basename(args.matrix))
    except (IcBreakdownError, CgBreakdownError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    text = _report_json(report)
    print(text)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text + "\n")
    return 0 if report.converged else 2


_CSV_FIELDS = ["matrix", "ordering", "b_s", "w", "format", "rep", "iterations",
               "converged", "time_setup_s", "time_solve_s", "time_per_iter_s",
               "error"]


def _bench_matrix(source, parser):
    if isinstance(source, str):
        return load_matrix(source), os.path.basename(source)
    if isinstance(source, dict) and source.get("gen") == "laplacian5pt":
        nx, ny = int(source["nx"]), int(source["ny"])
        a, _ = gen_laplacian_5pt(nx, ny)
        return a, f"laplacian5pt:{nx}x{ny}"
    if isinstance(source, dict) and source.get("gen") == "randspd":
        a = gen_random_spd(int(source["n"]), float(source.get("density", 0.01)),
                           int(source.get("seed", 0)))
        return a, f"randspd:{source['n']}"
    parser.error(f"unsupported matrix source {source!r}")


def cmd_bench(args, parser):
    _apply_backend(args)
    try:
        with open(args.plan) as f:
            plan = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: cannot read plan: {e}", file=sys.stderr)
        return 1
    configs = plan.get("configs") or []
    if not configs:
        parser.error("benchmark plan has no configs")
    reps = int(plan.get("reps", 1))
    if reps < 1:
        parser.error("reps must be at least 1")
    out_path = args.out or plan.get("out")
    if not out_path:
        parser.error("no output path (plan 'out' or --out)")
    try:
        a, mat_name = _bench_matrix(plan.get("matrix"), parser)
    except (IngestionError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    b = spmv(a, np.ones(a.n))
    rows = []
    for spec in configs:
        cfg = CgConfig(tol=float(spec.get("tol", 1e-7)),
                       max_iters=int(spec.get("max_iters", 50000)),
                       ordering=spec.get("ordering", "natural"),
                       b_s=int(spec.get("bs", 4)), w=int(spec.get("w", 4)),
                       shift=float(spec.get("shift", 0.0)),
                       threads=int(spec.get("threads", 0)) or _threads(args),
                       spmv_format=spec.get("format", "crs"))
        base = {"matrix": mat_name, "ordering": cfg.ordering, "b_s": cfg.b_s,
                "w": cfg.w, "format": cfg.spmv_format}
        for _ in range(args.warmup):
            try:
                pcg(a, b, cfg, mat_name)
            except Exception:
                break
        good = []
        for rep in range(reps):
            row = dict(base, rep=rep, error="")
            try:
                _, rp = pcg(a, b, cfg, mat_name)
                row.update(iterations=rp.iterations, converged=rp.converged,
                           time_setup_s=f"{rp.time_setup_s:.6f}",
                           time_solve_s=f"{rp.time_solve_s:.6f}",
                           time_per_iter_s=f"{rp.time_solve_s / max(rp.iterations, 1):.6e}")
                good.append(rp)
            except Exception as e:
                row.update(iterations="", converged="", time_setup_s="",
                           time_solve_s="", time_per_iter_s="", error=str(e))
            rows.append(row)
        if good:
            med_solve = statistics.median(r.time_solve_s for r in good)
            med_setup = statistics.median(r.time_setup_s for r in good)
            med_iters = statistics.median(r.iterations for r in good)
            rows.append(dict(base, rep="median", iterations=int(med_iters),
                             converged=all(r.converged for r in good),
                             time_setup_s=f"{med_setup:.6f}",
                             time_solve_s=f"{med_solve:.6f}",
                             time_per_iter_s=f"{med_solve / max(med_iters, 1):.6e}",
                             error=""))
        else:
            rows.append(dict(base, rep="median", iterations="", converged="",
                             time_setup_s="", time_solve_s="",
                             time_per_iter_s="", error="all repetitions failed"))
    with open(out_path, "w", newline="") as f:
        wr = csv.DictWriter(f, fieldnames=_CSV_FIELDS)
        wr.writeheader()
        wr.writerows(rows)
    print(f"wrote {out_path} ({len(rows)} rows)")
    return 0


def cmd_check(args, parser):
    _apply_backend(args)
    a = _load(args)
    if a is None:
        return 1
    threads = _threads(args)
    failures = []

    def record(name, ok, detail=""):
        if ok:
            print(f"PASS {name}")
        else:
            print(f"FAIL {name}{': ' + detail if detail else ''}")
            failures.append(name)

    rng = np.random.default_rng(12345)
    blocking = build_blocks(a, args.bs)
    lay = color_blocks(a, blocking)
    hl = build_hbmc(lay, args.w)
    a_ext, b_ext = extend_with_dummies(a, np.zeros(a.n), hl)
    a_pad, _ = permute_system(a_ext, b_ext, hl.padded_perm)

    perm = hl.perm
    if args.corrupt_perm:
        # deliberately swap the targets of a structurally coupled pair
        rows = np.repeat(np.arange(a_pad.n, dtype=np.int64), np.diff(a_pad.row_ptr))
        off = rows != a_pad.col_idx
        i, j = int(rows[off][0]), int(a_pad.col_idx[off][0])
        bad = perm.new_of_old.copy()
        bad[i], bad[j] = bad[j], bad[i]
        from .matrix import Permutation
        perm = Permutation(bad)
    er = check_er_condition(a_pad, perm)
    record("er-condition", er.holds, f"{er.n_violations} violating pairs")

    a_final, _ = permute_system(a_ext, np.zeros(hl.n_pad), hl.composed_perm)
    l2 = check_level2_structure(a_final, hl)
    record("level2-diagonality", l2.n_diag_violations == 0,
           f"{l2.n_diag_violations} in-step couplings")
    record("level1-independence", l2.n_cross_violations == 0,
           f"{l2.n_cross_violations} same-color cross-block couplings")

    tol = 1e-14

    def maxrel(got, ref):
        scale = max(float(np.max(np.abs(ref))), 1e-300)
        return float(np.max(np.abs(got - ref))) / scale

    with WorkerPool(threads) as pool:
        counter = BarrierCounter()
        # mc
        col = greedy_color_nodes(a)
        a_mc, _ = permute_system(a, np.zeros(a.n), col.perm)
        f_mc = ic0_factorize(a_mc, layout_tag="mc")
        r = rng.standard_normal(a.n)
        y_ref = sub_forward_seq(f_mc, r)
        y = sub_forward_mc(f_mc, col, r, pool, counter)
        ok_f, barrier_f = maxrel(y, y_ref) <= tol, counter.count == col.n_c - 1
        z_ref = sub_backward_seq(f_mc, y_ref)
        z = sub_backward_mc(f_mc, col, y_ref, pool, counter)
        record("kernel-oracle-mc", ok_f and maxrel(z, z_ref) <= tol)
        record("barrier-count-mc", barrier_f and counter.count == col.n_c - 1,
               f"want {col.n_c - 1}, got {counter.count}")
        # bmc
        a_bmc, _ = permute_system(a, np.zeros(a.n), lay.perm)
        f_bmc = ic0_factorize(a_bmc, layout_tag="bmc")
        y_ref = sub_forward_seq(f_bmc, r)
        y = sub_forward_bmc(f_bmc, lay, r, pool, counter)
        ok_f, barrier_f = maxrel(y, y_ref) <= tol, counter.count == lay.n_c - 1
        z_ref = sub_backward_seq(f_bmc, y_ref)
        z = sub_backward_bmc(f_bmc, lay, y_ref, pool, counter)
        record("kernel-oracle-bmc", ok_f and maxrel(z, z_ref) <= tol)
        record("barrier-count-bmc", barrier_f and counter.count == lay.n_c - 1,
               f"want {lay.n_c - 1}, got {counter.count}")
        # hbmc
        f_h = ic0_factorize(a_final, layout_tag="hbmc")
        sf = build_sell_factor(f_h, hl)
        r_pad = np.zeros(hl.n_pad)
        r_pad[hl.real_positions] = r
        y_ref = sub_forward_seq(f_h, r_pad)
        y = sub_forward_hbmc(sf, hl, r_pad, pool, counter)
        ok_f, barrier_f = maxrel(y, y_ref) <= tol, counter.count == hl.n_c - 1
        z_ref = sub_backward_seq(f_h, y_ref)
        z = sub_backward_hbmc(sf, hl, y_ref, pool, counter)
        record("kernel-oracle-hbmc", ok_f and maxrel(z, z_ref) <= tol)
        record("barrier-count-hbmc", barrier_f and counter.count == hl.n_c - 1,
               f"want {hl.n_c - 1}, got {counter.count}")

    if failures:
        print(f"failed: {', '.join(failures)}", file=sys.stderr)
        return 1
    print("all checks passed")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"gen": cmd_gen, "reorder": cmd_reorder, "solve": cmd_solve,
                "bench": cmd_bench, "check": cmd_check}
    return handlers[args.command](args, parser)


if __name__ == "__main__":
    raise SystemExit(main())
