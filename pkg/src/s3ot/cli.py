"""Command line front end.

Five subcommands cover the practical surface: ``divergence`` evaluates one
transport value between a density grid and an annotation file, ``fit``
trains a grid on annotations and writes the density plus a training trace,
``eval`` scores predicted grids against ground-truth point files paired by
filename stem, ``sweep-epsilon`` refits across a list of blur scales, and
``oracle`` exposes the slow reference solvers for spot checks.

Every subcommand accepts ``--json`` to emit a single machine-readable
object on stdout instead of text. Exit codes: 0 success, 1 unreadable input
or unwritable output, 2 violated precondition (malformed measure, mass
mismatch, empty pairing), 3 failed convergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .balanced import (
    SolverConfig,
    balanced_value,
    self_value,
    solve_balanced,
    symmetric_potential,
)
from .errors import (
    EmptyMeasureError,
    EvaluateBeforeConvergenceError,
    FitDivergedError,
    MassMismatchError,
    MeasureFormatError,
    NotConvergedError,
    S3Error,
)
from .fit import (
    L2_PSEUDO,
    S3,
    SEMIBALANCED,
    WASSERSTEIN,
    FitConfig,
    LossConfig,
    count_metrics,
    fit_density_grid,
)
from .measures import (
    EUCLIDEAN,
    SQUARED_EUCLIDEAN,
    GridMeasure,
    PointMeasure,
    _atomic_write_text,
    build_cost,
    grid_to_discrete,
    load_grid_measure,
    load_point_measure,
    mass,
    save_grid_measure,
    write_pgm,
)
from .oracle import entropic_primal_bruteforce, exact_ot_lp
from .semibalanced import counting_loss

EXIT_OK = 0
EXIT_IO = 1
EXIT_PRECONDITION = 2
EXIT_NOT_CONVERGED = 3

_COST_ALIASES = {"sqeuclid": SQUARED_EUCLIDEAN, "euclid": EUCLIDEAN}
_LOSS_ALIASES = {"l2": L2_PSEUDO, "wd": WASSERSTEIN, "smb": SEMIBALANCED, "s3": S3}


def _emit(args, payload: dict, text_lines: list) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        for line in text_lines:
            print(line)


def _sniff_measure(path: str):
    """A point file starts with an  x,y  header; anything else is a grid."""
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            stripped = line.strip()
            if stripped:
                break
        else:
            raise MeasureFormatError(f"{path}: empty measure file")
    fields = [f.strip().lower() for f in stripped.split(",")]
    if fields[:2] == ["x", "y"]:
        return load_point_measure(path)
    return load_grid_measure(path)


def _as_atoms(measure):
    """(support, weights) view of either measure kind; grids drop empty cells."""
    if isinstance(measure, PointMeasure):
        return np.asarray(measure.xy), np.asarray(measure.weights)
    disc = grid_to_discrete(measure)
    if disc.all_pruned:
        raise EmptyMeasureError("grid has no positive cells")
    return np.asarray(disc.support), np.asarray(disc.weights)


# ---------------------------------------------------------------- divergence

def _cmd_divergence(args) -> int:
    grid = load_grid_measure(args.source)
    points = load_point_measure(args.target)
    config = SolverConfig(epsilon=args.epsilon, tolerance=args.tol,
                          max_iterations=args.max_iter)
    cost_kind = _COST_ALIASES[args.cost]
    m_src = mass(grid)
    m_tgt = mass(points)

    if args.kind == "semibalanced":
        res = counting_loss(grid, points, config, gradient="none",
                            cost_kind=cost_kind)
        if not res.converged:
            raise NotConvergedError(max(res.cross_iterations, res.self_iterations),
                                    float("nan"), config.tolerance)
        value = res.value
        iterations = max(res.cross_iterations, res.self_iterations)
    else:
        src_support, src_weights = _as_atoms(grid)
        norm = max(grid.extent)
        cost_cross = np.asarray(build_cost(src_support, points.xy, kind=cost_kind,
                                           normalization=norm).costs)
        if args.kind == "wasserstein":
            pot = solve_balanced(src_weights, points.weights, cost_cross, config)
            if not pot.converged:
                raise NotConvergedError(pot.iterations_used, pot.final_residual,
                                        config.tolerance)
            value = balanced_value(pot, src_weights, points.weights)
            iterations = pot.iterations_used
        else:  # sinkhorn
            cost_aa = np.asarray(build_cost(src_support, src_support,
                                            kind=cost_kind, normalization=norm).costs)
            cost_bb = np.asarray(build_cost(points.xy, points.xy, kind=cost_kind,
                                            normalization=norm).costs)
            cross = solve_balanced(src_weights, points.weights, cost_cross, config)
            self_a = symmetric_potential(src_weights, cost_aa, config)
            self_b = symmetric_potential(points.weights, cost_bb, config)
            for part in (cross, self_a, self_b):
                if not part.converged:
                    raise NotConvergedError(part.iterations_used,
                                            part.final_residual, config.tolerance)
            value = (balanced_value(cross, src_weights, points.weights)
                     - self_value(self_a, src_weights)
                     - self_value(self_b, points.weights))
            iterations = max(cross.iterations_used, self_a.iterations_used,
                             self_b.iterations_used)
    payload = {
        "command": "divergence",
        "kind": args.kind,
        "value": value,
        "epsilon": args.epsilon,
        "mass_source": m_src,
        "mass_target": m_tgt,
        "iterations": iterations,
        "converged": True,
    }
    _emit(args, payload, [
        f"kind = {args.kind}",
        f"value = {value:.6f}",
        f"mass_source = {m_src:.6f}",
        f"mass_target = {m_tgt:.6f}",
    ])
    return EXIT_OK


# ----------------------------------------------------------------------- fit

def _trace_csv(trace) -> str:
    rows = ["epoch,loss_total,loss_smb,loss_sc,mass,count_err,inner_iters,converged"]
    for i in range(len(trace)):
        rows.append(
            f"{i},{trace.loss_total[i]!r},{trace.loss_match[i]!r},"
            f"{trace.loss_scale[i]!r},{trace.mass[i]!r},{trace.count_error[i]!r},"
            f"{trace.inner_iterations[i]},{int(trace.converged[i])}"
        )
    return "\n".join(rows) + "\n"


def _cmd_fit(args) -> int:
    points = load_point_measure(args.points)
    out_dir = args.out
    try:
        os.makedirs(out_dir, exist_ok=True)
        probe = os.path.join(out_dir, ".write_probe")
        with open(probe, "w"):
            pass
        os.remove(probe)
    except OSError as exc:
        raise _UnwritableOutput(f"cannot write to {out_dir}: {exc}") from exc

    loss = LossConfig(kind=_LOSS_ALIASES[args.loss], epsilon=args.epsilon,
                      lambda_scale=args.lam, gaussian_sigma=args.sigma)
    fit_cfg = FitConfig(rows=args.grid_size[0], cols=args.grid_size[1],
                        cell_size=args.cell_size, epochs=args.epochs,
                        seed=args.seed, learning_rate=args.lr,
                        scale_block=args.scale_block)
    result = fit_density_grid(points, loss, fit_cfg)

    density_csv = os.path.join(out_dir, "density.csv")
    density_pgm = os.path.join(out_dir, "density.pgm")
    trace_csv = os.path.join(out_dir, "trace.csv")
    save_grid_measure(result.grid, density_csv)
    write_pgm(result.grid, density_pgm)
    _atomic_write_text(trace_csv, _trace_csv(result.trace))
    files = {"density_csv": density_csv, "density_pgm": density_pgm,
             "trace_csv": trace_csv}
    if result.coarse is not None:
        coarse_csv = os.path.join(out_dir, "coarse.csv")
        save_grid_measure(result.coarse, coarse_csv)
        files["coarse_csv"] = coarse_csv

    final_mass = mass(result.grid)
    count_err = result.trace.count_error[-1]
    payload = {
        "command": "fit",
        "loss": args.loss,
        "epsilon": args.epsilon,
        "epochs": args.epochs,
        "final_mass": final_mass,
        "count_error": count_err,
        "unconverged_epochs": int(sum(1 for c in result.trace.converged if not c)),
        "files": files,
    }
    _emit(args, payload, [
        f"loss = {args.loss}",
        f"final_mass = {final_mass:.6f}",
        f"count_error = {count_err:.6f}",
        f"wrote {', '.join(sorted(files.values()))}",
    ])
    return EXIT_OK


# ---------------------------------------------------------------------- eval

def _stem_index(directory: str, suffix: str) -> dict:
    out = {}
    for name in sorted(os.listdir(directory)):
        if name.endswith(suffix):
            out[name[: -len(suffix)]] = os.path.join(directory, name)
    return out


def _cmd_eval(args) -> int:
    if not os.path.isdir(args.pred):
        raise _UnreadableInput(f"prediction directory not found: {args.pred}")
    if not os.path.isdir(args.gt):
        raise _UnreadableInput(f"ground-truth directory not found: {args.gt}")
    preds = _stem_index(args.pred, ".csv")
    gts = _stem_index(args.gt, ".csv")
    stems = sorted(set(preds) & set(gts))
    unpaired = sorted(set(preds) ^ set(gts))
    for stem in unpaired:
        print(f"warning: no counterpart for {stem!r}; skipped", file=sys.stderr)
    if not stems:
        raise EmptyMeasureError("no prediction/ground-truth pairs share a stem")
    pairs = []
    for stem in stems:
        grid = load_grid_measure(preds[stem])
        pts = load_point_measure(gts[stem])
        predicted = mass(grid)
        actual = mass(pts)
        pairs.append({"name": stem, "predicted": predicted, "actual": actual,
                      "error": predicted - actual})
    mae, rmse = count_metrics([p["predicted"] for p in pairs],
                              [p["actual"] for p in pairs])
    payload = {"command": "eval", "pairs": pairs, "mae": mae, "rmse": rmse,
               "n_pairs": len(pairs)}
    lines = [
        f"{p['name']}: predicted {p['predicted']:.3f} actual {p['actual']:.3f} "
        f"error {p['error']:+.3f}"
        for p in pairs
    ]
    lines.append(f"mae = {mae:.6f}")
    lines.append(f"rmse = {rmse:.6f}")
    _emit(args, payload, lines)
    return EXIT_OK


# ------------------------------------------------------------- sweep-epsilon

def _sweep_one(task: tuple) -> dict:
    (loss_alias, epsilon, xy, weights, rows, cols, cell_size, epochs, seed,
     lam, scale_block) = task
    points = PointMeasure(np.asarray(xy), np.asarray(weights))
    loss = LossConfig(kind=_LOSS_ALIASES[loss_alias], epsilon=epsilon,
                      lambda_scale=lam)
    cfg = FitConfig(rows=rows, cols=cols, cell_size=cell_size, epochs=epochs,
                    seed=seed, scale_block=scale_block)
    result = fit_density_grid(points, loss, cfg)
    trace = result.trace
    return {
        "loss": loss_alias,
        "epsilon": epsilon,
        "final_mass": trace.mass[-1],
        "count_error": trace.count_error[-1],
        "final_loss": trace.loss_total[-1],
        "converged": bool(all(trace.converged)),
    }


def _cmd_sweep(args) -> int:
    points = load_point_measure(args.points)
    try:
        os.makedirs(args.out, exist_ok=True)
    except OSError as exc:
        raise _UnwritableOutput(f"cannot create {args.out}: {exc}") from exc
    losses = [s.strip() for s in args.losses.split(",") if s.strip()]
    for alias in losses:
        if alias not in _LOSS_ALIASES:
            raise ValueError(f"unknown loss {alias!r}; choose from {sorted(_LOSS_ALIASES)}")
    epsilons = [float(s) for s in args.epsilons.split(",") if s.strip()]
    if not epsilons or not losses:
        raise ValueError("need at least one loss and one epsilon")
    tasks = [
        (alias, eps, points.xy.tolist(), points.weights.tolist(),
         args.grid_size[0], args.grid_size[1], args.cell_size, args.epochs,
         args.seed, args.lam, args.scale_block)
        for alias in losses for eps in epsilons
    ]
    workers = int(os.environ.get("S3_NUM_WORKERS", "1"))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            rows = list(pool.map(_sweep_one, tasks))
    else:
        rows = [_sweep_one(t) for t in tasks]
    sweep_csv = os.path.join(args.out, "sweep.csv")
    out = ["loss,epsilon,final_mass,count_error,final_loss,converged"]
    for r in rows:
        out.append(
            f"{r['loss']},{r['epsilon']!r},{r['final_mass']!r},"
            f"{r['count_error']!r},{r['final_loss']!r},{int(r['converged'])}"
        )
    _atomic_write_text(sweep_csv, "\n".join(out) + "\n")
    spreads = {}
    for alias in losses:
        errs = [r["count_error"] for r in rows if r["loss"] == alias]
        spreads[alias] = max(errs) - min(errs)
    payload = {"command": "sweep-epsilon", "rows": rows,
               "spread": spreads, "file": sweep_csv}
    lines = [
        f"{r['loss']} eps={r['epsilon']:g}: mass {r['final_mass']:.4f} "
        f"count_error {r['count_error']:.4f}"
        for r in rows
    ]
    lines += [f"spread[{alias}] = {spreads[alias]:.4f}" for alias in losses]
    lines.append(f"wrote {sweep_csv}")
    _emit(args, payload, lines)
    return EXIT_OK


# -------------------------------------------------------------------- oracle

def _oracle_pair(args):
    src = _sniff_measure(args.source)
    tgt = _sniff_measure(args.target)
    src_support, src_weights = _as_atoms(src)
    tgt_support, tgt_weights = _as_atoms(tgt)
    norm = 1.0
    for m in (src, tgt):
        if isinstance(m, GridMeasure):
            norm = max(norm, *m.extent)
    cost = np.asarray(build_cost(src_support, tgt_support,
                                 kind=_COST_ALIASES[args.cost],
                                 normalization=norm).costs)
    return src_weights, tgt_weights, cost


def _cmd_oracle_lp(args) -> int:
    a, b, cost = _oracle_pair(args)
    res = exact_ot_lp(a, b, cost)
    payload = {
        "command": "oracle-exact-lp",
        "value": res.value,
        "pivots": res.pivots,
        "n_source": len(a),
        "n_target": len(b),
    }
    _emit(args, payload, [f"value = {res.value:.12g}", f"pivots = {res.pivots}"])
    return EXIT_OK


def _cmd_oracle_entropic(args) -> int:
    a, b, cost = _oracle_pair(args)
    res = entropic_primal_bruteforce(a, b, cost, args.epsilon,
                                     convention=args.convention,
                                     semibalanced=args.semibalanced,
                                     tol=args.tol)
    payload = {
        "command": "oracle-entropic-primal",
        "value": res.value,
        "convention": args.convention,
        "semibalanced": args.semibalanced,
        "epsilon": args.epsilon,
        "steps": res.steps,
        "residual": res.residual,
        "simplified": res.simplified,
        "full_kl": res.full_kl,
    }
    _emit(args, payload, [
        f"value = {res.value:.12g}",
        f"steps = {res.steps}",
        f"residual = {res.residual:.3e}",
    ])
    return EXIT_OK


# -------------------------------------------------------------------- driver

class _UnreadableInput(S3Error):
    pass


class _UnwritableOutput(S3Error):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="s3ot",
        description="Transport-based crowd density estimation tools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_json(p):
        p.add_argument("--json", action="store_true",
                       help="emit one JSON object on stdout")

    p = sub.add_parser("divergence", help="one transport value, grid vs points")
    p.add_argument("--kind", choices=["wasserstein", "sinkhorn", "semibalanced"],
                   required=True)
    p.add_argument("--source", required=True, help="density grid file")
    p.add_argument("--target", required=True, help="annotation point file")
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--cost", choices=sorted(_COST_ALIASES), default="sqeuclid")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iter", type=int, default=500)
    add_json(p)
    p.set_defaults(func=_cmd_divergence)

    p = sub.add_parser("fit", help="train a density grid on annotations")
    p.add_argument("--points", required=True)
    p.add_argument("--grid-size", nargs=2, type=int, metavar=("ROWS", "COLS"),
                   default=[32, 32])
    p.add_argument("--cell-size", type=float, default=1.0)
    p.add_argument("--loss", choices=sorted(_LOSS_ALIASES), default="s3")
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--sigma", type=float, default=1.0,
                   help="bump width for the l2 target")
    p.add_argument("--scale-block", type=int, default=2)
    p.add_argument("--out", required=True, help="output directory")
    add_json(p)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("eval", help="score predicted grids against point files")
    p.add_argument("--pred", required=True, help="directory of predicted grid .csv")
    p.add_argument("--gt", required=True, help="directory of ground-truth point .csv")
    add_json(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep-epsilon", help="refit across blur scales")
    p.add_argument("--points", required=True)
    p.add_argument("--losses", default="s3,wd",
                   help="comma-separated loss aliases")
    p.add_argument("--epsilons", default="0.01,0.05,0.1,0.5,1.0",
                   help="comma-separated blur scales")
    p.add_argument("--grid-size", nargs=2, type=int, metavar=("ROWS", "COLS"),
                   default=[16, 16])
    p.add_argument("--cell-size", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--scale-block", type=int, default=2)
    p.add_argument("--out", required=True)
    add_json(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("oracle", help="slow reference solvers")
    osub = p.add_subparsers(dest="oracle_command", required=True)

    q = osub.add_parser("exact-lp", help="unregularized value by simplex")
    q.add_argument("--source", required=True)
    q.add_argument("--target", required=True)
    q.add_argument("--cost", choices=sorted(_COST_ALIASES), default="sqeuclid")
    add_json(q)
    q.set_defaults(func=_cmd_oracle_lp)

    q = osub.add_parser("entropic-primal", help="regularized value by projected descent")
    q.add_argument("--source", required=True)
    q.add_argument("--target", required=True)
    q.add_argument("--cost", choices=sorted(_COST_ALIASES), default="sqeuclid")
    q.add_argument("--epsilon", type=float, default=0.01)
    q.add_argument("--convention", choices=["simplified", "full_kl"],
                   default="simplified")
    q.add_argument("--semibalanced", action="store_true")
    q.add_argument("--tol", type=float, default=1e-10)
    add_json(q)
    q.set_defaults(func=_cmd_oracle_entropic)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (_UnreadableInput, _UnwritableOutput) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (MeasureFormatError, MassMismatchError, EmptyMeasureError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (NotConvergedError, EvaluateBeforeConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except FitDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
