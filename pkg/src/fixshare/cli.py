"""Command-line front end.

Subcommands: ``gen-data``, ``run``, ``reproduce-fig2``, ``check-bounds`` and
``verify``. Every output is a UTF-8 CSV with a header row. Relative output
paths are resolved against ``$FIXSHARE_OUTPUT_DIR`` when it is set.

Exit codes: 0 success, 2 input or limit error, 3 numeric failure,
4 bound violation.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
import time
from pathlib import Path
from typing import Callable

import numpy as np

from .constructions import (ModelAdvice, SegmentMode, build_bayes, build_bayes_union, build_dm,
                            build_fs_learning)
from .core import (BoundViolationError, FiniteDist, InvalidInputError, Labelling,
                   LimitExceededError, Segmentation, ZeroDensityError)
from .datagen import (DriftDatasetSpec, GaussianAdvice, fig2_specs, format_value, gen_drift_data,
                      random_drift_data, read_dataset_csv, write_dataset_csv)
from .ehmm import SPARSE, Ehmm, Share, iter_forward, run_forward
from .reference import (BOUND_TOL, SchemeKind, reference_round_losses, sweep_bounds)
from .reference.oracles import MAX_MIXTURE_HORIZON, MAX_PATHS, oracle_path_sum, oracle_segmentation_mixture

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_BOUND = 4

OUTPUT_DIR_ENV = "FIXSHARE_OUTPUT_DIR"
ALGORITHMS = ("bayes", "fs", "fs_freezing", "fs_sleeping")
DEFAULT_MEMBERS = "dm:0.1,dm:0.3"
DEFAULT_ALPHA = 0.01
EXHAUSTIVE_MAX_T = 10
VERIFY_TOL = 1e-9


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


# -- member registry ----------------------------------------------------------

def _gauss(arg: str) -> Ehmm:
    mu = float(arg)
    return Ehmm(FiniteDist.point(mu), None, None, name=f"gauss:{mu:g}")


def _bayes_k(arg: str) -> Ehmm:
    k = int(arg)
    if k < 1:
        raise InvalidInputError("bayes:<k> needs k >= 1")
    return build_bayes(FiniteDist.uniform(range(k)))


MEMBER_KINDS: dict[str, Callable[[str], Ehmm]] = {
    "dm": lambda arg: build_dm(float(arg)),
    "bayes": _bayes_k,
    "gauss": _gauss,
}


def register_member_kind(name: str, builder: Callable[[str], Ehmm]) -> None:
    """Make ``name:<arg>`` available in member lists."""
    MEMBER_KINDS[name] = builder


def parse_member(text: str) -> Ehmm:
    kind, sep, arg = text.strip().partition(":")
    if not sep or kind not in MEMBER_KINDS:
        raise InvalidInputError(f"unknown member spec {text!r}; known kinds: {', '.join(MEMBER_KINDS)}")
    try:
        return MEMBER_KINDS[kind](arg)
    except ValueError as exc:
        raise InvalidInputError(f"bad member spec {text!r}: {exc}") from exc


def parse_members(text: str) -> list[Ehmm]:
    members = [parse_member(part) for part in text.split(",") if part.strip()]
    if not members:
        raise InvalidInputError("need at least one member")
    return members


def parse_prior(text: str | None, n: int) -> FiniteDist:
    if text is None or text.strip().lower() == "uniform":
        return FiniteDist.uniform(range(n))
    try:
        weights = [float(w) for w in text.split(",")]
    except ValueError as exc:
        raise InvalidInputError(f"cannot parse prior {text!r}") from exc
    if len(weights) != n:
        raise InvalidInputError(f"prior has {len(weights)} weights for {n} members")
    if any(not (w >= 0) for w in weights):
        raise InvalidInputError("prior weights must be nonnegative")
    prior = FiniteDist(enumerate(weights))
    if len(prior) != n:
        raise InvalidInputError("prior support must cover every member")
    return prior


def _alpha(text: str) -> float:
    a = float(text)
    if not 0.0 <= a <= 1.0:
        raise argparse.ArgumentTypeError(f"alpha must be in [0, 1], got {text}")
    return a


# -- data sources and outputs -------------------------------------------------

def output_path(path: str | os.PathLike) -> Path:
    p = Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    return p


def _open_out(path: Path):
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", newline="", encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _spec_from_args(args) -> DriftDatasetSpec | None:
    if getattr(args, "fig2", None):
        sl, fr = fig2_specs()
        return sl if SegmentMode.parse(args.fig2) is SegmentMode.SLEEPING else fr
    if getattr(args, "segments", None):
        return DriftDatasetSpec.parse(args.segments, args.mode, noise=args.noise, seed=args.seed)
    return None


def load_data(args) -> np.ndarray:
    if args.data is not None:
        try:
            return read_dataset_csv(args.data)
        except OSError as exc:
            raise CliError(f"cannot read {args.data}: {exc.strerror or exc}") from exc
    if args.random_data is not None:
        return random_drift_data(args.random_data, args.seed)
    spec = _spec_from_args(args)
    if spec is None:
        raise CliError("no dataset: give --data, --fig2, --segments or --random-data")
    return gen_drift_data(spec)


def build_run(algorithm: str, members, prior: FiniteDist, alpha: float, data):
    """``(model, op, advice, member_advice)`` for one of the CLI algorithms.

    ``bayes`` and ``fs`` treat the members as black boxes; ``member_advice``
    is then the :class:`ModelAdvice` wrapping them, else ``None``.
    """
    base = GaussianAdvice()
    if algorithm in ("bayes", "fs"):
        adv = ModelAdvice(members, base, data)
        op = SPARSE if algorithm == "bayes" else Share(alpha, "initial")
        return build_bayes(prior), op, adv, adv
    union = build_bayes_union(prior, members)
    mode = SegmentMode.FREEZING if algorithm == "fs_freezing" else SegmentMode.SLEEPING
    model, op = build_fs_learning(mode, alpha, union)
    return model, op, base, None


# -- commands -----------------------------------------------------------------

def cmd_gen_data(args) -> int:
    spec = _spec_from_args(args)
    if spec is None:
        raise CliError("give --fig2 or --segments")
    data = gen_drift_data(spec)
    path = output_path(args.output)
    _open_out(path).close()
    write_dataset_csv(path, data)
    print(f"wrote {len(data)} rows to {path}", file=sys.stderr)
    return EXIT_OK


def cmd_run(args) -> int:
    data = load_data(args)
    members = parse_members(args.members)
    prior = parse_prior(args.prior, len(members))
    model, op, adv, member_adv = build_run(args.algorithm, members, prior, args.alpha, data)
    path = output_path(args.output)
    t0 = time.perf_counter()
    with _open_out(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "round_loss", "cum_loss", "active_states"])
        cum = 0.0
        try:
            for before, loss, _ in iter_forward(model, op, adv, data, prune_below=args.prune_below):
                t = before.t
                cum += loss
                if member_adv is not None:
                    active = member_adv.active_count(t)
                else:
                    active = before.n_active
                w.writerow([t, format_value(float(data[t - 1])), format_value(loss),
                            format_value(cum), active])
        except ZeroDensityError as exc:
            fh.flush()
            raise CliError(f"zero predictive density at round {exc.t}; partial output in {path}",
                           EXIT_NUMERIC) from exc
    elapsed = time.perf_counter() - t0
    print(f"total_loss {format_value(cum)}", file=sys.stderr)
    print(f"wall_time {elapsed:.3f}s", file=sys.stderr)
    return EXIT_OK


def fig2_losses(mode: SegmentMode | str, rates=(0.1, 0.3)) -> dict[str, np.ndarray]:
    """Cumulative losses of the three reference schemes on one Fig. 2 dataset."""
    mode = SegmentMode.parse(mode)
    sl, fr = fig2_specs(rates)
    spec = sl if mode is SegmentMode.SLEEPING else fr
    data = gen_drift_data(spec)
    members = [build_dm(r) for r in rates]
    seg = Segmentation.from_lengths([n for n, _ in spec.segments])
    labels = Labelling(seg, tuple(list(rates).index(r) for _, r in spec.segments))
    adv = GaussianAdvice()
    out = {}
    for col, kind in (("stbe", SchemeKind.STANDARD), ("ll_freezing", SchemeKind.LL_FREEZING),
                      ("ll_sleeping", SchemeKind.LL_SLEEPING)):
        out[col] = np.cumsum(reference_round_losses(kind, seg, labels, members, adv, data))
    return out


def cmd_reproduce_fig2(args) -> int:
    rates = tuple(float(r) for r in args.rates.split(","))
    outdir = output_path(args.out_dir)
    for mode in (SegmentMode.SLEEPING, SegmentMode.FREEZING):
        cols = fig2_losses(mode, rates)
        path = outdir / f"fig2_{mode.value}.csv"
        with _open_out(path) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "stbe", "ll_freezing", "ll_sleeping"])
            for k in range(len(cols["stbe"])):
                w.writerow([k + 1] + [format_value(float(cols[c][k]))
                                      for c in ("stbe", "ll_freezing", "ll_sleeping")])
        final = ", ".join(f"{c}={format_value(float(v[-1]))}" for c, v in cols.items())
        print(f"{mode.value}: {final} -> {path}", file=sys.stderr)
    return EXIT_OK


def _format_labels(labels: Labelling) -> str:
    return ";".join(str(v) for v in labels.labels)


def cmd_check_bounds(args) -> int:
    data = load_data(args)
    T = len(data)
    kind = SchemeKind.parse(args.scheme)
    members = parse_members(args.members)
    prior = parse_prior(args.prior, len(members))
    labellings = None
    segmentations = None
    if args.segmentation is not None:
        seg = Segmentation.parse(args.segmentation)
        if seg.horizon != T:
            raise CliError(f"segmentation covers 1:{seg.horizon}, data has {T} rounds")
        if args.labels is not None:
            try:
                labs = tuple(int(v) for v in args.labels.replace(";", ",").split(","))
            except ValueError as exc:
                raise CliError(f"cannot parse labels {args.labels!r}") from exc
            labellings = [Labelling(seg, labs)]
        else:
            segmentations = [seg]
    elif args.labels is not None:
        raise CliError("--labels needs --segmentation")
    elif T > EXHAUSTIVE_MAX_T:
        raise CliError(f"exhaustive mode needs T <= {EXHAUSTIVE_MAX_T}, data has {T} rounds; "
                       "give --segmentation")
    adv = GaussianAdvice()
    path = output_path(args.output)
    worst = math.inf
    rows = 0
    with _open_out(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["segmentation", "labels", "reference_loss", "switching_term",
                    "selection_term", "rhs", "algorithm_loss", "slack"])
        for seg, labels, rep in sweep_bounds(kind, members, prior, args.alpha, adv, data,
                                             segmentations=segmentations, labellings=labellings,
                                             tol=math.inf):
            w.writerow([seg.format(), _format_labels(labels)]
                       + [format_value(v) for v in (rep.reference_loss, rep.switching_term,
                                                    rep.selection_term, rep.rhs,
                                                    rep.algorithm_loss, rep.slack)])
            worst = min(worst, rep.slack)
            rows += 1
    print(f"{rows} rows, min slack {format_value(worst)} -> {path}", file=sys.stderr)
    if worst < -BOUND_TOL:
        raise CliError(f"bound violated: min slack {format_value(worst)}", EXIT_BOUND)
    return EXIT_OK


def cmd_verify(args) -> int:
    data = load_data(args)
    members = parse_members(args.members)
    prior = parse_prior(args.prior, len(members))
    model, op, adv, _ = build_run(args.algorithm, members, prior, args.alpha, data)
    fwd = run_forward(model, op, adv, data).total_log_loss
    if args.oracle == "path-sum":
        oracle = oracle_path_sum(model, adv, data, op, max_paths=args.max_paths)
    else:
        if args.algorithm not in ("fs_freezing", "fs_sleeping"):
            raise CliError("the segmentation-mixture oracle applies to fs_freezing and fs_sleeping")
        mode = SegmentMode.FREEZING if args.algorithm == "fs_freezing" else SegmentMode.SLEEPING
        union = build_bayes_union(prior, members)
        oracle = oracle_segmentation_mixture(mode, args.alpha, union, adv, data,
                                             max_horizon=args.max_horizon)
    diff = abs(fwd - oracle)
    ok = diff <= VERIFY_TOL
    print(f"forward_loss {format_value(fwd)}")
    print(f"oracle_loss {format_value(oracle)}")
    print(f"abs_diff {diff:.3e}")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_NUMERIC


# -- parser -------------------------------------------------------------------

def _add_spec_args(p, *, mode_default="sleeping"):
    p.add_argument("--fig2", choices=["sleeping", "freezing"], help="one of the two 10 x 100 datasets")
    p.add_argument("--segments", help='segment spec, e.g. "2x3@1.0,1x100@0.3" (count x length @ rate)')
    p.add_argument("--mode", choices=["sleeping", "freezing"], default=mode_default,
                   help="timing of --segments data")
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian noise std added to --segments data")
    p.add_argument("--seed", type=int, default=0, help="seed for --noise and --random-data")


def _add_data_args(p):
    _add_spec_args(p)
    p.add_argument("--data", help="dataset CSV with column x")
    p.add_argument("--random-data", type=int, metavar="T", help="seeded random dataset of T rounds")


def _add_model_args(p, *, algorithm=True):
    if algorithm:
        p.add_argument("--algorithm", choices=ALGORITHMS, default="fs_sleeping")
    p.add_argument("--alpha", type=_alpha, default=DEFAULT_ALPHA, help="switching rate")
    p.add_argument("--members", default=DEFAULT_MEMBERS,
                   help="comma-separated member specs: dm:<theta>, bayes:<k>, gauss:<mu>")
    p.add_argument("--prior", default="uniform", help='"uniform" or comma-separated weights')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fixshare", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a drifting-mean dataset")
    _add_spec_args(p)
    p.add_argument("-o", "--output", default="data.csv")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("run", help="run an algorithm and write per-round losses")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--prune-below", type=float, default=None,
                   help="drop states with log weight below this (off by default)")
    p.add_argument("-o", "--output", default="run.csv")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("reproduce-fig2", help="cumulative reference-scheme losses on both datasets")
    p.add_argument("--rates", default="0.1,0.3")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_reproduce_fig2)

    p = sub.add_parser("check-bounds", help="evaluate the regret bound per segmentation and labelling")
    _add_data_args(p)
    _add_model_args(p, algorithm=False)
    p.add_argument("--scheme", choices=[k.value for k in SchemeKind], default="sleeping")
    p.add_argument("--segmentation", help='e.g. "1-4,5-8"; default: all segmentations (T <= 10)')
    p.add_argument("--labels", help="member index per cell, e.g. 0,1")
    p.add_argument("-o", "--output", default="bounds.csv")
    p.set_defaults(func=cmd_check_bounds)

    p = sub.add_parser("verify", help="compare the forward algorithm against a brute-force oracle")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--oracle", choices=["path-sum", "seg-mixture"], required=True)
    p.add_argument("--max-paths", type=int, default=MAX_PATHS)
    p.add_argument("--max-horizon", type=int, default=MAX_MIXTURE_HORIZON)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"fixshare: {exc}", file=sys.stderr)
        return exc.code
    except BoundViolationError as exc:
        print(f"fixshare: {exc}", file=sys.stderr)
        return EXIT_BOUND
    except (ZeroDensityError, ArithmeticError) as exc:
        print(f"fixshare: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvalidInputError, LimitExceededError, ValueError) as exc:
        print(f"fixshare: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
