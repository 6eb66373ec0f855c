"""Command-line interface: training, gap reports, trace files and figures."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .dataio import (
    ModelFile,
    load_model,
    parse_svmlight,
    read_cost_matrix,
    save_model,
    write_trace_csv,
)
from .errors import ProxSdcaError
from .l1 import L1Config, solve_l1_l2, solve_l1_linf
from .losses import CostMatrix, MulticlassHingeLoss, make_loss
from .problem import Problem, dual_objective, primal_objective
from .regularizers import make_regularizer
from .solver import SolverConfig, UpdateRule, run, schedule_lipschitz, schedule_smooth
from .structured import class_blocked_dataset, train_structured

INTEGRITY_TOL = 1e-6


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proxsdca",
        description="Regularized loss minimization by stochastic dual coordinate "
        "ascent, with duality-gap certificates.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="fit a model and write trace/model files")
    tr.add_argument("data", help="svmlight-format training data")
    tr.add_argument("--task", required=True, choices=("erm", "l1l2", "l1linf", "struct"))
    tr.add_argument("--loss", default="smoothed-hinge",
                    choices=("hinge", "smoothed-hinge", "logistic", "squared"))
    tr.add_argument("--gamma", type=float, default=1.0,
                    help="smoothing width of the smoothed hinge (default 1.0)")
    tr.add_argument("--option", type=int, choices=(1, 2, 3, 4, 5), default=None,
                    help="update rule 1-5 (default: task-dependent)")
    tr.add_argument("--lambda", dest="lam", type=float, default=None,
                    help="regularization weight (erm and struct tasks)")
    tr.add_argument("--sigma", type=float, default=None, help="l1 weight (l1 tasks)")
    tr.add_argument("--eps", type=float, default=None,
                    help="target accuracy (l1/struct) or target duality gap (erm)")
    tr.add_argument("--B", type=float, default=None, help="norm bound on the optimum")
    tr.add_argument("--seed", type=int, default=None,
                    help="PRNG seed (default: $PROXSDCA_SEED or 0)")
    tr.add_argument("--T", type=int, default=None, help="iteration count/cap")
    tr.add_argument("--T0", type=int, default=None, help="burn-in before output selection")
    tr.add_argument("--gap-every", type=int, default=None,
                    help="iterations between gap checkpoints (default: n)")
    tr.add_argument("--output", choices=("final", "average", "random"), default=None)
    tr.add_argument("--R", type=float, default=None, help="operator-norm bound override")
    tr.add_argument("--z-bound", type=float, default=None,
                    help="upper bound replacing ||z||^2 in rule 4")
    tr.add_argument("--dim", type=int, default=None, help="explicit feature dimension")
    tr.add_argument("--cost-matrix", default=None, help="cost matrix file (struct task)")
    tr.add_argument("--out", default=None, help="model output path")
    tr.add_argument("--trace", default=None, help="trace CSV output path")
    tr.add_argument("--plot", default=None, help="render the trace to this image file")

    gr = sub.add_parser("gap-report", help="recompute a model's certificate")
    gr.add_argument("model", help="model file written by train")
    gr.add_argument("data", help="the dataset the model was trained on")
    gr.add_argument("--dim", type=int, default=None)
    gr.add_argument("--cost-matrix", default=None)
    return parser


def _default_seed() -> int:
    env = os.environ.get("PROXSDCA_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise ProxSdcaError(f"PROXSDCA_SEED={env!r} is not an integer") from None


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "train":
            return _train(args)
        return _gap_report(args)
    except ProxSdcaError as exc:
        return _fail(str(exc))
    except (ValueError, OSError) as exc:
        return _fail(str(exc))


def _train(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    if args.task == "struct":
        return _train_struct(args, seed)

    loss = make_loss(args.loss, args.gamma)
    rule = args.option
    if rule == 5 and loss.gamma is None:
        return _fail("--option 5 applies to smooth losses only")
    if rule == 1 and args.task == "l1linf":
        return _fail("--option 1 is unavailable with the sup-norm regularizer")

    dataset = parse_svmlight(args.data, d=args.dim)

    if args.task in ("l1l2", "l1linf"):
        if args.sigma is None or args.eps is None:
            return _fail(f"task {args.task} needs --sigma and --eps")
        if args.T is not None or args.T0 is not None:
            return _fail("l1 tasks derive their schedule; --T/--T0 are not accepted")
        config = L1Config(sigma=args.sigma, eps=args.eps, B=args.B, rule=rule,
                          seed=seed, R=args.R, gap_check_every=args.gap_every)
        solve = solve_l1_l2 if args.task == "l1l2" else solve_l1_linf
        res = solve(dataset, loss, config)
        print(f"task={args.task} n={dataset.n} d={dataset.d} lambda={res.lam:.6g} "
              f"sigma/lambda={res.threshold:.6g} B={res.B:.6g} R={res.R:.6g}")
        final = res.trace.final()
        print(f"iterations={final.t} primal={res.run.primal:.10g} "
              f"dual={res.run.dual:.10g} gap={res.run.gap:.6g} "
              f"target={args.eps / 2.0:.6g} reached={res.reached_target}")
        model = ModelFile(
            d=dataset.d, k=1, loss=args.loss,
            loss_gamma=args.gamma if args.loss == "smoothed-hinge" else None,
            regularizer=res.problem.regularizer.kind, threshold=res.threshold,
            lam=res.lam, sigma=args.sigma, seed=seed,
            rule=int(_rule_of(rule, loss)), task=args.task,
            iterations=res.run.iterations, final_primal=res.run.primal,
            final_dual=res.run.dual, final_gap=res.run.gap,
            w=res.w, alpha=res.run.alpha,
        )
        _write_outputs(args, model, res.trace)
        return 0 if res.reached_target else 2

    # plain regularized minimization with the l2 penalty
    if args.lam is None:
        return _fail("task erm needs --lambda")
    reg = make_regularizer("l2")
    problem = Problem(dataset, loss, reg, args.lam, R=args.R)
    rule = rule if rule is not None else 3
    T, T0, output = args.T, args.T0, args.output
    if T is None:
        if args.eps is None:
            return _fail("task erm needs --T or --eps")
        if loss.gamma is not None:
            sched = schedule_smooth(dataset.n, problem.R, args.lam, loss.gamma, args.eps)
            T, T0 = sched.T, sched.T0
            output = output or "final"
        else:
            sched = schedule_lipschitz(dataset.n, problem.R, loss.lipschitz, args.lam, args.eps)
            T, T0 = sched.T, sched.T0
            output = output or "random"
    cfg = SolverConfig(rule=rule, T=T, T0=T0 or 0, output=output or "final", seed=seed,
                       gap_check_every=args.gap_every, target_gap=args.eps,
                       R_override=args.R, z_bound=args.z_bound)
    res = run(problem, cfg)
    print(f"task=erm n={dataset.n} d={dataset.d} lambda={args.lam:.6g} R={problem.R:.6g} "
          f"rule={int(cfg.rule)} T={T}")
    print(f"iterations={res.iterations} primal={res.primal:.10g} dual={res.dual:.10g} "
          f"gap={res.gap:.6g} reached={res.reached_target}")
    model = ModelFile(
        d=dataset.d, k=1, loss=args.loss,
        loss_gamma=args.gamma if args.loss == "smoothed-hinge" else None,
        regularizer="l2", threshold=0.0, lam=args.lam, sigma=None, seed=seed,
        rule=int(cfg.rule), task="erm", iterations=res.iterations,
        final_primal=res.primal, final_dual=res.dual, final_gap=res.gap,
        w=res.w, alpha=res.alpha,
    )
    _write_outputs(args, model, res.trace)
    return 0 if res.reached_target else 2


def _rule_of(rule, loss) -> UpdateRule:
    if rule is not None:
        return UpdateRule(int(rule))
    return UpdateRule.SMOOTH_FIXED if loss.gamma is not None else UpdateRule.CONSERVATIVE


def _train_struct(args, seed: int) -> int:
    if args.lam is None or args.eps is None:
        return _fail("task struct needs --lambda and --eps")
    if args.output == "average":
        return _fail("task struct supports final or random output only")
    base = parse_svmlight(args.data, d=args.dim, multiclass=True)
    if args.cost_matrix:
        cost = read_cost_matrix(args.cost_matrix)
        k = cost.k
        if int(np.max(base.labels)) >= k:
            return _fail("a label exceeds the cost matrix size")
    else:
        k = int(np.max(base.labels)) + 1
        if k < 2:
            return _fail("struct task needs at least two classes")
        cost = CostMatrix.zero_one(k)
    dataset = class_blocked_dataset(base, k)
    res = train_structured(dataset, cost, args.lam, args.eps, seed,
                           gap_check_every=args.gap_every,
                           output=args.output or "random")
    print(f"task=struct n={dataset.n} d={dataset.d} k={k} lambda={args.lam:.6g} "
          f"T0={res.T0} T={res.T}")
    print(f"iterations={res.iterations} primal={res.primal:.10g} dual={res.dual:.10g} "
          f"gap={res.gap:.6g} reached={res.reached_target}")
    model = ModelFile(
        d=dataset.d, k=k, loss="multiclass-hinge", loss_gamma=None,
        regularizer="l2", threshold=0.0, lam=args.lam, sigma=None, seed=seed,
        rule=4, task="struct", iterations=res.iterations,
        final_primal=res.primal, final_dual=res.dual, final_gap=res.gap,
        w=res.w, alpha=None,
    )
    _write_outputs(args, model, res.trace)
    return 0 if res.reached_target else 2


def _write_outputs(args, model: ModelFile, trace) -> None:
    if args.out:
        save_model(args.out, model)
    if args.trace:
        write_trace_csv(args.trace, trace)
    if args.plot:
        from .plotting import plot_trace

        plot_trace(trace, args.plot, title=f"{model.task} ({model.loss})")


def _gap_report(args) -> int:
    model = load_model(args.model)
    warnings = []

    if model.task == "struct":
        base = parse_svmlight(args.data, multiclass=True)
        if args.cost_matrix:
            cost = read_cost_matrix(args.cost_matrix)
        else:
            cost = CostMatrix.zero_one(model.k)
        dataset = class_blocked_dataset(base, model.k)
        loss = MulticlassHingeLoss(cost)
        loss_term = float(np.mean([
            loss.value(int(y), b.scores(model.w))
            for y, b in zip(dataset.labels, dataset.examples)
        ]))
        primal = loss_term + model.lam * float(model.w @ model.w) / 2.0
        dual = model.final_dual  # maintained decomposition; dual matrix not stored
        gap = primal - dual
        print("dual-free structured model: dual value is the stored maintained "
              "decomposition; primal recomputed from the weights")
    else:
        dataset = parse_svmlight(args.data, d=model.d)
        loss = make_loss(model.loss, model.loss_gamma or 1.0)
        reg = make_regularizer(model.regularizer, model.threshold, dim=model.d)
        problem = Problem(dataset, loss, reg, model.lam)
        primal = primal_objective(problem, model.w)
        if model.alpha is not None:
            dual = dual_objective(problem, model.alpha)
        else:
            dual = model.final_dual
            warnings.append("model carries no dual matrix; using the stored dual value")
        gap = primal - dual

    print(f"primal={primal!r} dual={dual!r} gap={gap!r}")
    print(f"stored primal={model.final_primal!r} dual={model.final_dual!r} "
          f"gap={model.final_gap!r}")
    for name, fresh, stored in (
        ("primal", primal, model.final_primal),
        ("dual", dual, model.final_dual),
        ("gap", gap, model.final_gap),
    ):
        if abs(fresh - stored) > INTEGRITY_TOL * max(1.0, abs(stored)):
            warnings.append(
                f"integrity warning: recomputed {name} {fresh!r} differs from stored "
                f"{stored!r} by more than {INTEGRITY_TOL:g}"
            )
    for w in warnings:
        print(w)
    print("certificate: primal sub-optimality <= gap =", repr(gap))
    return 0


if __name__ == "__main__":
    sys.exit(main())
