"""Command-line surface: instance synthesis, estimation runs, trial batches,
stopping-criterion tables, and tolerance calibration.

Exit codes: 0 success, 1 estimation did not reach the required inlier count,
2 malformed input.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .calibrate import calibrate_tolerance
from .embedding import DEFAULT_RHO, EmbeddingConfig
from .engine import (
    EstimatorConfig,
    estimate,
    required_iterations_latent,
    required_iterations_vanilla,
)
from .geometry import count_inliers
from .matchio import (
    FORMAT_VERSION,
    InputError,
    read_matches,
    read_truth,
    truth_path,
    write_matches,
    write_truth,
)
from .solvers import MINIMAL_SIZE
from .synth import InstanceSpec, generate

BENCH_COLUMNS = [
    "mode", "trial", "success", "recovered_inliers", "planted_inliers",
    "best_inlier_count", "best_inlier_rate", "iterations", "samples", "degenerate",
    "fits", "embeddings", "collisions", "verifications", "stop_reason",
    "ms_sampling", "ms_fitting", "ms_hashing", "ms_verification", "ms_total",
]


def _add_shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="master RNG seed (generated and printed if omitted)")
    p.add_argument("--p0", type=float, default=0.99, help="target success probability")
    p.add_argument("--mode", choices=["vanilla", "latent"], default="latent")
    p.add_argument("--t", type=float, default=None, help="latent collision tolerance")
    p.add_argument("--c-factor", type=float, default=1.8, help="grid cell size as a multiple of t")
    p.add_argument("--tables", type=int, default=4, help="number of hash tables")
    p.add_argument("--table-bits", type=int, default=19, help="table address width in bits")
    p.add_argument("--max-iters", type=int, default=5_000_000, help="iteration cap")
    p.add_argument("--threshold", type=float, default=None, help="verification residual threshold")
    p.add_argument("--rho", type=float, default=DEFAULT_RHO, help="translation-to-angle ratio (length units per radian)")
    p.add_argument("--jobs", type=int, default=1, help="concurrent trials in bench")
    p.add_argument("--out", type=Path, default=None, help="output path (stdout if omitted)")


def _add_instance_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--problem", choices=["homography", "rigid3d"], default="homography")
    p.add_argument("--n-matches", type=int, default=1000)
    p.add_argument("--inlier-rate", type=float, default=0.1)
    p.add_argument("--sigma", type=float, default=1.0, help="inlier noise sigma")
    p.add_argument("--canvas", type=str, default="640x480", help="canvas WxH in pixels")
    p.add_argument("--box", type=float, default=200.0, help="3D source box side length")
    p.add_argument("--xi", type=float, default=50.0, help="translation bound")


def _parse_canvas(text: str) -> tuple[float, float]:
    try:
        w, h = text.lower().split("x")
        return float(w), float(h)
    except ValueError:
        raise InputError(f"bad canvas spec {text!r}, expected WxH") from None


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    seed = int(np.random.SeedSequence().entropy % (1 << 31))
    print(f"# generated seed: {seed}", file=sys.stderr)
    return seed


def _instance_spec(args, seed: int) -> InstanceSpec:
    w, h = _parse_canvas(args.canvas)
    return InstanceSpec(
        problem=args.problem, n_matches=args.n_matches, inlier_rate=args.inlier_rate,
        noise_sigma=args.sigma, canvas_w=w, canvas_h=h, box=args.box, xi=args.xi, seed=seed,
    )


def _default_threshold(args) -> float:
    if args.threshold is not None:
        return args.threshold
    return 3.0 if getattr(args, "problem", "homography") == "homography" else 1.5


def _emit(args, text: str) -> None:
    if args.out is not None:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)


def cmd_synth(args) -> int:
    seed = _resolve_seed(args)
    spec = _instance_spec(args, seed)
    matches, truth, mask = generate(spec)
    out = args.out or Path(f"{spec.problem}_{seed}.txt")
    meta = {"seed": seed, "inlier_rate": spec.inlier_rate, "sigma": spec.noise_sigma}
    if spec.problem == "homography":
        meta["canvas"] = f"{spec.canvas_w}x{spec.canvas_h}"
    else:
        meta["box"] = spec.box
        meta["xi"] = spec.xi
    write_matches(out, matches, meta)
    write_truth(truth_path(out), truth, mask, {"problem": spec.problem, "seed": seed})
    print(f"wrote {out} and {truth_path(out)}", file=sys.stderr)
    return 0


def _estimator_config(args, problem: str, seed: int, embedding: EmbeddingConfig) -> EstimatorConfig:
    return EstimatorConfig(
        mode=args.mode,
        p0=args.p0,
        n_max=args.max_iters,
        verify_threshold=_default_threshold(args),
        latent_tolerance=args.t,
        c_factor=args.c_factor,
        tables=args.tables,
        table_bits=args.table_bits,
        embedding=embedding,
        seed=seed,
        min_inliers_to_accept=getattr(args, "min_inliers", 0),
    )


def cmd_run(args) -> int:
    seed = _resolve_seed(args)
    matches, meta = read_matches(args.matches)
    if args.mode == "latent" and args.t is None:
        raise InputError("latent mode requires --t (see the calibrate subcommand)")
    if "canvas" in meta:
        w, h = _parse_canvas(meta["canvas"])
    else:
        w = max(float(np.max(matches.src[:, 0])), 1.0)
        h = max(float(np.max(matches.src[:, 1])), 1.0) if matches.src.shape[1] > 1 else 1.0
    xi = float(meta.get("xi", 50.0))
    embedding = EmbeddingConfig(canvas_w=w, canvas_h=h, rho=args.rho, xi=xi)
    args.problem = matches.problem
    cfg = _estimator_config(args, matches.problem, seed, embedding)
    result = estimate(matches, cfg)

    doc = {
        "format_version": FORMAT_VERSION,
        "config": {
            "mode": cfg.mode, "p0": cfg.p0, "n_max": cfg.n_max,
            "verify_threshold": cfg.verify_threshold, "latent_tolerance": cfg.latent_tolerance,
            "c_factor": cfg.c_factor, "tables": cfg.tables, "table_bits": cfg.table_bits,
            "rho": embedding.rho, "seed": seed,
        },
    }
    doc.update(result.to_dict())
    _emit(args, json.dumps(doc, indent=2) + "\n")
    if result.best_inlier_count < getattr(args, "min_inliers", 0):
        return 1
    return 0


def _bench_trial(payload) -> dict:
    """Run one (mode, trial) cell; module-level so worker processes can pick it up."""
    spec_kwargs, mode, trial, flags = payload
    state = np.random.SeedSequence([flags["seed"], trial]).generate_state(1, dtype=np.uint64)
    trial_seed = int(state[0]) % (1 << 62)
    spec = InstanceSpec(seed=trial_seed, **spec_kwargs)
    matches, truth, mask = generate(spec)
    embedding = EmbeddingConfig(
        canvas_w=spec.canvas_w, canvas_h=spec.canvas_h, rho=flags["rho"], xi=spec.xi
    )
    t = flags["t"]
    if mode == "latent" and t is None:
        t = calibrate_tolerance(
            spec, flags["quantile"], embedding, verify_threshold=flags["threshold"]
        )
        t = max(t, 1e-9)
    cfg = EstimatorConfig(
        mode=mode, p0=flags["p0"], n_max=flags["max_iters"], verify_threshold=flags["threshold"],
        latent_tolerance=t, c_factor=flags["c_factor"], tables=flags["tables"],
        table_bits=flags["table_bits"], embedding=embedding, seed=trial_seed,
    )
    row = {"mode": mode, "trial": trial}
    try:
        result = estimate(matches, cfg)
        planted = int(mask.sum())
        recovered = 0
        if result.best_model is not None:
            _, found = count_inliers(result.best_model, matches, cfg.verify_threshold)
            recovered = int((found & mask).sum())
        row.update(
            success=recovered >= 0.9 * planted,
            recovered_inliers=recovered,
            planted_inliers=planted,
            best_inlier_count=result.best_inlier_count,
            best_inlier_rate=result.best_inlier_rate,
            iterations=result.iterations_used,
            samples=result.samples_drawn,
            degenerate=result.degenerate_skipped,
            fits=result.fits,
            embeddings=result.embeddings,
            collisions=result.collisions_reported,
            verifications=result.verifications_run,
            stop_reason=result.stop_reason,
            ms_sampling=1000 * result.timing["sampling"],
            ms_fitting=1000 * result.timing["fitting"],
            ms_hashing=1000 * result.timing["hashing"],
            ms_verification=1000 * result.timing["verification"],
            ms_total=1000 * sum(result.timing.values()),
        )
    except Exception as exc:  # a failed trial is recorded, never aborts the batch
        row.update({c: "" for c in BENCH_COLUMNS if c not in row})
        row["success"] = False
        row["stop_reason"] = f"error: {exc}"
    return row


def cmd_bench(args) -> int:
    seed = _resolve_seed(args)
    spec = _instance_spec(args, seed)
    spec_kwargs = {
        "problem": spec.problem, "n_matches": spec.n_matches, "inlier_rate": spec.inlier_rate,
        "noise_sigma": spec.noise_sigma, "canvas_w": spec.canvas_w, "canvas_h": spec.canvas_h,
        "box": spec.box, "xi": spec.xi,
    }
    flags = {
        "seed": seed, "p0": args.p0, "max_iters": args.max_iters,
        "threshold": _default_threshold(args), "t": args.t, "c_factor": args.c_factor,
        "tables": args.tables, "table_bits": args.table_bits, "rho": args.rho,
        "quantile": args.calibrate_quantile,
    }
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    payloads = [
        (spec_kwargs, mode, trial, flags) for mode in modes for trial in range(args.trials)
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_bench_trial, payloads))
    else:
        rows = [_bench_trial(p) for p in payloads]

    writer_rows = [BENCH_COLUMNS]
    for row in rows:
        writer_rows.append([row.get(c, "") for c in BENCH_COLUMNS])
    for mode in modes:
        mrows = [r for r in rows if r["mode"] == mode and r.get("iterations") != ""]
        if not mrows:
            continue
        iters = np.array([r["iterations"] for r in mrows], dtype=float)
        agg = {
            "mode": mode,
            "trial": "AGGREGATE",
            "success": f"{np.mean([bool(r['success']) for r in mrows]):.4f}",
            "iterations": f"{iters.mean():.1f}|p95={np.percentile(iters, 95):.1f}",
            "verifications": f"{np.mean([r['verifications'] for r in mrows]):.2f}",
            "collisions": f"{np.mean([r['collisions'] for r in mrows]):.2f}",
            "ms_total": f"{np.mean([r['ms_total'] for r in mrows]):.2f}",
        }
        writer_rows.append([agg.get(c, "") for c in BENCH_COLUMNS])

    import io

    buf = io.StringIO()
    csv.writer(buf).writerows(writer_rows)
    _emit(args, buf.getvalue())
    return 0


def cmd_stopping_table(args) -> int:
    p0_list = [float(x) for x in args.p0_list.split(",")]
    gamma_list = [int(x) for x in args.gamma_list.split(",")]
    omegas = np.arange(args.omega_start, args.omega_stop + 1e-12, args.omega_step)
    rows = [["omega", "gamma", "p0", "n_vanilla", "n_latent", "ratio"]]
    for gamma in gamma_list:
        for p0 in p0_list:
            for omega in omegas:
                omega = round(float(omega), 10)
                nv = required_iterations_vanilla(p0, omega, gamma)
                nl = required_iterations_latent(p0, omega, gamma, args.detect_prob)
                ratio = nl / nv if math.isfinite(nl) else math.inf
                rows.append([omega, gamma, p0, nv, int(nl) if math.isfinite(nl) else "inf",
                             f"{ratio:.6f}" if math.isfinite(ratio) else "inf"])
    import io

    buf = io.StringIO()
    csv.writer(buf).writerows(rows)
    _emit(args, buf.getvalue())
    return 0


def cmd_calibrate(args) -> int:
    seed = _resolve_seed(args)
    spec = _instance_spec(args, seed)
    embedding = EmbeddingConfig(
        canvas_w=spec.canvas_w, canvas_h=spec.canvas_h, rho=args.rho, xi=spec.xi
    )
    t = calibrate_tolerance(
        spec, args.quantile, embedding, verify_threshold=_default_threshold(args)
    )
    _emit(args, json.dumps({"recommended_t": t, "quantile": args.quantile, "seed": seed}) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridransac",
        description="Robust model estimation with grid-hashed hypothesis filtering",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a planted synthetic instance")
    _add_shared(p)
    _add_instance_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="estimate a model from a match file")
    _add_shared(p)
    p.add_argument("matches", type=Path, help="match file (see matchio format)")
    p.add_argument("--min-inliers", type=int, default=0, help="exit 1 below this inlier count")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="batch of seeded trials with CSV report")
    _add_shared(p)
    _add_instance_flags(p)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--modes", type=str, default="vanilla,latent")
    p.add_argument("--calibrate-quantile", type=float, default=0.95)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("stopping-table", help="iteration requirements of both stopping rules")
    _add_shared(p)
    p.add_argument("--p0-list", type=str, default="0.9,0.99,0.999")
    p.add_argument("--gamma-list", type=str, default="3,4")
    p.add_argument("--omega-start", type=float, default=0.01)
    p.add_argument("--omega-stop", type=float, default=0.95)
    p.add_argument("--omega-step", type=float, default=0.01)
    p.add_argument("--detect-prob", type=float, default=1.0)
    p.set_defaults(func=cmd_stopping_table)

    p = sub.add_parser("calibrate", help="recommend a latent tolerance for an instance family")
    _add_shared(p)
    _add_instance_flags(p)
    p.add_argument("--quantile", type=float, default=0.95)
    p.set_defaults(func=cmd_calibrate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
