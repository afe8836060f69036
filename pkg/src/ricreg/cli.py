"""Command-line front end.

Subcommands: gen, fit, add, remove, tune, shift-bias, pdhg, eval, bench.
Machine-readable JSON goes to stdout (indented with --pretty); any run that
writes a checkpoint echoes its path and the current minimizer.  Exit codes:
0 success, 1 usage/input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import engine, pdhg, problems
from .bases import basis_names, feature_matrix, get_basis
from .bench import bench_incremental
from .model import (
    CHECKPOINT_VERSION,
    Checkpoint,
    Hyperparams,
    NumericsError,
    RiccatiState,
    read_blocks,
    read_checkpoint,
    write_blocks,
    write_checkpoint,
)
from .oracle import normal_system, solve_direct
from .rls import rls_fit

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _emit(payload: dict, pretty: bool) -> None:
    print(json.dumps(payload, indent=2 if pretty else None))


def _parse_vector(text: str, n: int | None, flag: str) -> np.ndarray:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise _UsageError(f"{flag}: expected a number or comma-separated numbers")
    if len(values) > 1:
        return np.array(values)
    if n is None:
        raise _UsageError(
            f"{flag}: cannot broadcast a single value without a known dimension; "
            "pass a comma-separated vector"
        )
    return np.full(n, values[0])


def _infer_n(blocks, gamma_text: str, theta0_text: str) -> int:
    if blocks:
        return blocks[0].n
    for text in (gamma_text, theta0_text):
        if "," in text:
            return len(text.split(","))
    raise _UsageError(
        "cannot infer the model dimension from an empty data file; "
        "pass --gamma (or --theta0) as a comma-separated vector"
    )


def _state_metadata(args, extra: dict | None = None) -> dict:
    meta = {"step_size": repr(args.step_size)} if hasattr(args, "step_size") else {}
    if extra:
        meta.update(extra)
    return meta


def _solution_payload(ck_path, solution) -> dict:
    payload = {
        "checkpoint": str(ck_path),
        "theta_star": [float(v) for v in solution.theta_star],
    }
    for key in ("data_fit", "reg_value", "total_loss"):
        value = getattr(solution, key)
        if value is not None:
            payload[key] = value
    return payload


def _exact_state(hyper: Hyperparams, blocks) -> RiccatiState:
    """Closed-form flow state (P, q, r) from the normal equations."""
    a, rhs = normal_system(hyper, blocks)
    p = np.linalg.inv(a)
    p = 0.5 * (p + p.T)
    q = p @ (rhs - hyper.evaluation_point())
    theta = p @ rhs
    data_fit = 0.0
    for block in blocks:
        resid = block.phi @ theta - block.y
        data_fit += 0.5 * block.lam * float(resid @ resid)
    diff = theta - hyper.theta0
    total = data_fit + 0.5 * float(hyper.gamma @ (diff * diff))
    x = hyper.evaluation_point()
    # Invert the loss identity total = -(x'Px/2 + q'x + r) + theta0'Gamma theta0/2.
    r = -total + 0.5 * float(hyper.theta0 @ x) - 0.5 * float(x @ (p @ x)) - float(q @ x)
    elapsed = float(sum(b.lam for b in blocks))
    return RiccatiState(p=p, q=q, r=r, elapsed=elapsed)


# -- gen ----------------------------------------------------------------------


def _write_manifest(out, payload: dict, grid, truth_columns: dict) -> tuple[str, str]:
    truth_path = f"{out}.truth.csv"
    with open(truth_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x"] + list(truth_columns))
        for i, x in enumerate(grid):
            writer.writerow([repr(float(x))] + [repr(float(col[i])) for col in truth_columns.values()])
    manifest_path = f"{out}.manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump({**payload, "truth_csv": truth_path}, fh, indent=2)
        fh.write("\n")
    return manifest_path, truth_path


def cmd_gen(args) -> int:
    out = args.out
    if args.problem == "sin10x":
        prob = problems.gen_sin10x(args.count, args.seed, args.noise)
        write_blocks(prob.blocks, out)
        grid = prob.eval_grid
        manifest, truth = _write_manifest(
            out,
            {
                "problem": "sin10x",
                "seed": args.seed,
                "count": args.count,
                "noise": args.noise,
                "basis": prob.basis_name,
                "blocks": str(out),
            },
            grid,
            {"y": prob.truth["y"](grid)},
        )
        _emit(
            {"blocks": str(out), "manifest": manifest, "truth_csv": truth,
             "count": len(prob.blocks), "basis": prob.basis_name, "seed": args.seed},
            args.pretty,
        )
    elif args.problem == "reaction-diffusion":
        prob = problems.gen_reaction_diffusion(
            args.count, args.seed, args.noise, args.lambda_b
        )
        write_blocks(prob.blocks, out)
        grid = prob.eval_grid
        manifest, truth = _write_manifest(
            out,
            {
                "problem": "reaction-diffusion",
                "seed": args.seed,
                "count": args.count,
                "noise": args.noise,
                "lambda_b": args.lambda_b,
                "basis": prob.basis_name,
                "blocks": str(out),
            },
            grid,
            {"u": prob.truth["u"](grid), "f": prob.truth["f"](grid)},
        )
        _emit(
            {"blocks": str(out), "manifest": manifest, "truth_csv": truth,
             "count": len(prob.blocks), "basis": prob.basis_name, "seed": args.seed},
            args.pretty,
        )
    else:  # ko
        prob = problems.gen_ko(args.grid_count, args.solver_h, args.fd_h)
        paths = []
        for i, eq_blocks in enumerate(prob.equations, start=1):
            path = f"{out}.eq{i}.jsonl"
            write_blocks(eq_blocks, path)
            paths.append(path)
        grid = prob.eval_grid
        truth_states = prob.trajectory_on(grid)
        manifest, truth = _write_manifest(
            out,
            {
                "problem": "ko",
                "grid_count": args.grid_count,
                "solver_h": args.solver_h,
                "fd_h": args.fd_h,
                "basis": prob.basis_name,
                "blocks": paths,
            },
            grid,
            {f"x{i + 1}": truth_states[:, i] for i in range(3)},
        )
        _emit(
            {"blocks": paths, "manifest": manifest, "truth_csv": truth,
             "count": len(prob.equations[0]), "basis": prob.basis_name},
            args.pretty,
        )
    return EXIT_OK


# -- fit ----------------------------------------------------------------------


def cmd_fit(args) -> int:
    blocks = read_blocks(args.data)
    n = _infer_n(blocks, args.gamma, args.theta0)
    hyper = Hyperparams(
        gamma=_parse_vector(args.gamma, n, "--gamma"),
        theta0=_parse_vector(args.theta0, n, "--theta0"),
    )
    cfg = engine.IntegrationConfig(step_h=args.step_size)
    if args.method == "riccati":
        state = engine.fit(hyper, blocks, cfg)
    elif args.method == "rls":
        exact = _exact_state(hyper, blocks)
        rls_state = rls_fit(hyper, blocks)
        state = rls_state.to_riccati_state(r=exact.r, elapsed=exact.elapsed)
    else:  # lsq
        state = _exact_state(hyper, blocks)
    ck = Checkpoint(
        version=CHECKPOINT_VERSION,
        n=n,
        hyperparams=hyper,
        state=state,
        metadata=_state_metadata(args, {"method": args.method}),
    )
    write_checkpoint(ck, args.out)
    solution = engine.extract_solution(state, hyper, blocks)
    _emit({**_solution_payload(args.out, solution), "method": args.method}, args.pretty)
    return EXIT_OK


# -- add / remove ---------------------------------------------------------------


def _cmd_edit(args, forward: bool) -> int:
    ck = read_checkpoint(args.checkpoint)
    blocks = read_blocks(args.data)
    cfg = engine.IntegrationConfig(step_h=args.step_size)
    state = ck.state
    op = engine.add_block if forward else engine.remove_block
    for block in blocks:
        state = op(state, block, cfg)
    new_ck = ck.with_state(state)
    write_checkpoint(new_ck, args.out)
    solution = engine.extract_solution(state, ck.hyperparams)
    _emit(
        {**_solution_payload(args.out, solution), "blocks_processed": len(blocks)},
        args.pretty,
    )
    return EXIT_OK


def cmd_add(args) -> int:
    return _cmd_edit(args, forward=True)


def cmd_remove(args) -> int:
    return _cmd_edit(args, forward=False)


# -- tune -----------------------------------------------------------------------


def cmd_tune(args) -> int:
    ck = read_checkpoint(args.checkpoint)
    cfg = engine.IntegrationConfig(step_h=args.step_size)
    if (args.gamma is None) == (args.lambda_block is None):
        raise _UsageError("pass exactly one of --gamma or --lambda-block/--lambda")
    if args.trace and args.gamma is None:
        raise _UsageError("--trace only applies to --gamma sweeps")
    if args.gamma is not None:
        new_gamma = _parse_vector(args.gamma, ck.n, "--gamma")
        trace = engine.ParetoTrace() if args.trace else None
        state, hyper = engine.tune_gamma(ck.state, ck.hyperparams, new_gamma, cfg, trace)
        if args.trace:
            trace.write_csv(args.trace)
        new_ck = ck.with_state(state).with_hyperparams(hyper)
        extra = {"trace": args.trace} if args.trace else {}
    else:
        if args.lam is None:
            raise _UsageError("--lambda-block requires --lambda OLD NEW")
        old_lam, new_lam = args.lam
        blocks = read_blocks(args.lambda_block)
        state = ck.state
        for block in blocks:
            state = engine.tune_lambda(state, block, old_lam, new_lam, cfg)
        new_ck = ck.with_state(state)
        extra = {"blocks_retuned": len(blocks), "lambda": [old_lam, new_lam]}
    write_checkpoint(new_ck, args.out)
    solution = engine.extract_solution(new_ck.state, new_ck.hyperparams)
    _emit({**_solution_payload(args.out, solution), **extra}, args.pretty)
    return EXIT_OK


# -- shift-bias -------------------------------------------------------------------


def cmd_shift_bias(args) -> int:
    ck = read_checkpoint(args.checkpoint)
    new_theta0 = _parse_vector(args.theta0, ck.n, "--theta0")
    solution = engine.shift_bias(ck.state, ck.hyperparams, new_theta0)
    new_ck = ck.with_hyperparams(ck.hyperparams.with_theta0(new_theta0))
    write_checkpoint(new_ck, args.out)
    _emit(_solution_payload(args.out, solution), args.pretty)
    return EXIT_OK


# -- pdhg -------------------------------------------------------------------------


def cmd_pdhg(args) -> int:
    blocks = read_blocks(args.data)
    if blocks:
        n = blocks[0].n
    elif "," in args.reg_weight:
        n = len(args.reg_weight.split(","))
    else:
        raise _UsageError("cannot infer dimension: empty data and scalar --reg-weight")
    spec = pdhg.ProxSpec(
        kind="weighted_l1" if args.reg == "l1" else "weighted_l2_squared",
        weights=_parse_vector(args.reg_weight, n, "--reg-weight"),
    )
    cfg = pdhg.PdhgConfig(
        sigma_theta=args.sigma_theta,
        sigma_w=args.sigma_w,
        max_iters=args.max_iters,
        tol=args.tol,
    )
    riccati_cfg = engine.IntegrationConfig(step_h=args.step_size)
    inner_state = None
    if args.checkpoint:
        inner_ck = read_checkpoint(args.checkpoint)
        expected = 1.0 / args.sigma_theta
        if inner_ck.n != n or not np.allclose(
            inner_ck.hyperparams.gamma, expected, rtol=1e-12, atol=0.0
        ):
            raise _UsageError(
                "checkpoint is not a reusable inner state for these step sizes "
                f"(need uniform gamma = {expected!r})"
            )
        inner_state = inner_ck.state
    result = pdhg.pdhg_solve(n, blocks, spec, cfg, riccati_cfg, inner_state)
    payload = {
        "theta_star": [float(v) for v in result.solution.theta_star],
        "sparsity_pattern": [
            float(v) for v in pdhg.sparsity_pattern(result.solution.theta_star)
        ],
        "iterations": result.iterations,
        "residual": result.residual,
        "converged": result.converged,
        "data_fit": result.solution.data_fit,
        "reg_value": result.solution.reg_value,
        "total_loss": result.solution.total_loss,
    }
    if args.out:
        ck = Checkpoint(
            version=CHECKPOINT_VERSION,
            n=n,
            hyperparams=pdhg.inner_hyperparams(n, args.sigma_theta),
            state=result.inner_state,
            metadata=_state_metadata(
                args, {"kind": "pdhg-inner", "reg": args.reg, "converged": str(result.converged)}
            ),
        )
        write_checkpoint(ck, args.out)
        payload["checkpoint"] = str(args.out)
    _emit(payload, args.pretty)
    return EXIT_OK if result.converged else EXIT_NUMERICAL


# -- eval -------------------------------------------------------------------------


def _read_truth_csv(path, column: str | None) -> np.ndarray:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty truth file")
    header, body = rows[0], rows[1:]
    try:
        [float(v) for v in header]
    except ValueError:
        pass  # real header row
    else:
        header, body = None, rows
    if header is None:
        idx = -1
    elif column is not None:
        if column not in header:
            raise ValueError(f"{path}: no column {column!r} in {header}")
        idx = header.index(column)
    else:
        idx = len(header) - 1
    return np.array([float(row[idx]) for row in body])


def cmd_eval(args) -> int:
    ck = read_checkpoint(args.checkpoint)
    basis = get_basis(args.basis)
    if basis.n != ck.n:
        raise _UsageError(f"basis {args.basis} has n={basis.n}, checkpoint has n={ck.n}")
    try:
        lo, hi, count = args.grid.split(",")
        grid = np.linspace(float(lo), float(hi), int(count))
    except ValueError:
        raise _UsageError("--grid must be LO,HI,COUNT")
    theta = engine.extract_solution(ck.state, ck.hyperparams).theta_star
    values = feature_matrix(basis, grid) @ theta
    reference = _read_truth_csv(args.truth, args.truth_column)
    if reference.shape != values.shape:
        raise _UsageError(
            f"truth has {reference.shape[0]} rows, grid has {values.shape[0]} points"
        )
    _emit(
        {
            "relative_l2": problems.relative_l2(values, reference),
            "grid": [float(lo), float(hi), int(count)],
            "basis": args.basis,
        },
        args.pretty,
    )
    return EXIT_OK


# -- bench ------------------------------------------------------------------------


def cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    rows = []
    for method in args.method.split(","):
        report = bench_incremental(
            n=args.n, m=args.m, sizes=sizes, method=method.strip(),
            h=args.step_size, seed=args.seed,
        )
        for size, secs in report.samples:
            rows.append({
                "method": report.method, "N": size, "n": report.n,
                "m": report.m, "seconds_per_update": secs,
            })
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["method", "N", "n", "m", "seconds_per_update"])
            for row in rows:
                writer.writerow(
                    [row["method"], row["N"], row["n"], row["m"],
                     repr(row["seconds_per_update"])]
                )
    _emit({"rows": rows, "out": args.out}, args.pretty)
    return EXIT_OK


# -- parser ------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="ricreg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False, out=True, step=True):
        p.add_argument("--pretty", action="store_true", help="indent JSON output")
        p.add_argument("--seed", type=int, default=0, help="PRNG seed (u64)")
        if step:
            p.add_argument("--step-size", type=float, default=1e-3,
                           help="RK4 step size h")
        if checkpoint:
            p.add_argument("--checkpoint", required=checkpoint == "required",
                           default=None, help="input checkpoint path")
        if out:
            p.add_argument("--out", required=out == "required", default=None,
                           help="output path")
        return p

    p = sub.add_parser("gen", help="generate a benchmark dataset")
    gsub = p.add_subparsers(dest="problem", required=True)
    g = common(gsub.add_parser("sin10x"), out="required", step=False)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--noise", type=float, default=1.0)
    g.set_defaults(func=cmd_gen)
    g = common(gsub.add_parser("reaction-diffusion"), out="required", step=False)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--noise", type=float, default=0.1)
    g.add_argument("--lambda-b", type=float, default=1.0)
    g.set_defaults(func=cmd_gen)
    g = common(gsub.add_parser("ko"), out="required", step=False)
    g.add_argument("--grid-count", type=int, default=1000)
    g.add_argument("--solver-h", type=float, default=1e-4)
    g.add_argument("--fd-h", type=float, default=1e-3)
    g.set_defaults(func=cmd_gen)

    p = common(sub.add_parser("fit", help="fit a model to a block stream"),
               out="required")
    p.add_argument("data", help="JSON-Lines block stream")
    p.add_argument("--gamma", required=True,
                   help="regularization weights (value or comma list)")
    p.add_argument("--theta0", default="0", help="prior bias (value or comma list)")
    p.add_argument("--method", choices=("riccati", "rls", "lsq"), default="riccati")
    p.set_defaults(func=cmd_fit)

    p = common(sub.add_parser("add", help="incorporate blocks into a checkpoint"),
               checkpoint="required", out="required")
    p.add_argument("data")
    p.set_defaults(func=cmd_add)

    p = common(sub.add_parser("remove", help="remove previously added blocks"),
               checkpoint="required", out="required")
    p.add_argument("data")
    p.set_defaults(func=cmd_remove)

    p = common(sub.add_parser("tune", help="retune data or regularization weights"),
               checkpoint="required", out="required")
    p.add_argument("--gamma", default=None,
                   help="new regularization weights (value or comma list)")
    p.add_argument("--lambda-block", default=None,
                   help="block stream whose weight changes")
    p.add_argument("--lambda", dest="lam", nargs=2, type=float, default=None,
                   metavar=("OLD", "NEW"))
    p.add_argument("--trace", default=None, help="write the sweep trace CSV here")
    p.set_defaults(func=cmd_tune)

    p = common(sub.add_parser("shift-bias", help="move the prior bias"),
               checkpoint="required", out="required", step=False)
    p.add_argument("--theta0", required=True, help="new bias (value or comma list)")
    p.set_defaults(func=cmd_shift_bias)

    p = common(sub.add_parser("pdhg", help="solve with a non-quadratic regularizer"),
               checkpoint=True, out=True)
    p.add_argument("data")
    p.add_argument("--reg", choices=("l1", "l2"), default="l1")
    p.add_argument("--reg-weight", required=True,
                   help="regularizer weights (value or comma list)")
    p.add_argument("--sigma-theta", type=float, default=0.5)
    p.add_argument("--sigma-w", type=float, default=0.5)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iters", type=int, default=100000)
    p.set_defaults(func=cmd_pdhg)

    p = common(sub.add_parser("eval", help="evaluate a checkpoint against truth"),
               checkpoint="required", out=False, step=False)
    p.add_argument("--basis", required=True, choices=basis_names())
    p.add_argument("--grid", required=True, help="LO,HI,COUNT")
    p.add_argument("--truth", required=True, help="truth CSV")
    p.add_argument("--truth-column", default=None)
    p.set_defaults(func=cmd_eval)

    p = common(sub.add_parser("bench", help="per-update timing across dataset sizes"))
    p.add_argument("--method", default="riccati,rls,lsq",
                   help="comma list of riccati|rls|lsq")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--sizes", default="100,10000")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericsError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
