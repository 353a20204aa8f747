"""Command-line front end: ``tulik {simulate,train,predict,eval}``.

Exit codes: 0 success, 2 usage (bad options, unreadable/unwritable files),
3 data (malformed or mismatched files), 4 numeric failure.  Errors are
reported on stderr as one line ``tulik: error[<code>]: <kind>: <message>``.
"""
import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import io
from .errors import (ArgumentError, DomainError, FormatError, InfeasibleParameterError,
                     NoRootError, NumericError, TulikError, UnboundedError)
from .inference.train import TrainConfig, mean_nll, train
from .predict import (classification_metrics, predict_interval_network,
                      predict_interval_time_only, recovery_report, step_probabilities)
from .model import Trajectory
from .simulate import PRESETS, make_preset, simulate_dataset

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _exit_code(err):
    if isinstance(err, (UsageError, ArgumentError, OSError)):
        return EXIT_USAGE
    if isinstance(err, FormatError):
        return EXIT_DATA
    if isinstance(err, (NumericError, InfeasibleParameterError, NoRootError, UnboundedError,
                        DomainError, FloatingPointError)):
        return EXIT_NUMERIC
    return EXIT_DATA


def _one_line(err):
    text = str(err) or type(err).__name__
    if isinstance(err, OSError) and err.filename is not None:
        text = f"{err.strerror or text}: {err.filename}"
    return " ".join(text.split())


def cmd_simulate(args):
    if (args.preset is None) == (args.params is None):
        raise UsageError("give exactly one of --preset or --params")
    meta = {"seed": args.seed, "offset": args.offset, "redraw": args.redraw}
    if args.preset is not None:
        preset = make_preset(args.preset, seed=args.seed)
        params = preset.params
        meta.update(preset.meta, preset=preset.name)
        num = preset.n_train if args.num is None else args.num
    else:
        params = io.read_params(args.params)
        num = 1 if args.num is None else args.num
    if num < 0 or args.redraw < 0:
        raise UsageError("--num and --redraw must be nonnegative")
    Y = simulate_dataset(params, num, args.seed, offset=args.offset, redraw=args.redraw)
    io.write_dataset(args.out, io.Dataset(params.grid, Y, params, meta))
    return EXIT_OK


def cmd_train(args):
    ds = io.read_dataset(args.data)
    config = io.read_config(args.config) if args.config else TrainConfig()
    if args.method is not None:
        config.method = args.method
    if args.epochs is not None:
        config.max_epochs = args.epochs
    if args.seed is not None:
        config.rng_seed = args.seed
    config.validate()
    if ds.M == 0:
        raise FormatError(f"{args.data}: dataset holds no trajectories")
    report = train(config, ds)
    io.write_params(args.out, report.final_params)
    if args.report:
        io.write_report(args.report, report)
    return EXIT_OK


def _check_match(params, ds, what):
    if params.grid != ds.grid or params.V != ds.V:
        raise FormatError(f"{what} (h={params.grid.h}, N={params.grid.N}, N'={params.grid.Nprime}, "
                          f"V={params.V}) do not match the data (h={ds.grid.h}, N={ds.grid.N}, "
                          f"N'={ds.grid.Nprime}, V={ds.V})")


def cmd_predict(args):
    params = io.read_params(args.params)
    ds = io.read_dataset(args.data)
    _check_match(params, ds, "params")
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        if args.mode == "step":
            w.writerow(["trajectory", "t", "node", "probability", "error"])
            for m in range(ds.M):
                try:
                    p = step_probabilities(params, Trajectory(ds.grid, ds.Y[m]))
                except InfeasibleParameterError as err:
                    w.writerow([m, "", "", "", _one_line(err)])
                    continue
                for (t, u), val in np.ndenumerate(p):
                    w.writerow([m, t + 1, u, repr(float(val)), ""])
            return EXIT_OK
        if args.start is None or args.stop is None:
            raise UsageError("interval mode needs --from and --to")
        w.writerow(["trajectory", "from", "to", "node", "probability", "error"])
        for m in range(ds.M):
            tr = Trajectory(ds.grid, ds.Y[m])
            try:
                if params.V == 1 and args.node in (None, 0):
                    p = predict_interval_time_only(params, tr, args.start, args.stop, t_last=args.last)
                else:
                    p = predict_interval_network(params, tr, args.start, args.stop, u=args.node,
                                                 t_last=args.last)
                row = [repr(p), ""]
            except InfeasibleParameterError as err:
                row = ["", _one_line(err)]
            node = "all" if args.node is None else args.node
            w.writerow([m, args.start, args.stop, node] + row)
    return EXIT_OK


def _aggregate(paths):
    runs = []
    for p in paths:
        with open(p) as fh:
            runs.append(json.load(fh))
    keys = sorted(set.intersection(*(set(k for k, v in r.items() if isinstance(v, (int, float)))
                                     for r in runs)))
    return {k: {"mean": float(np.mean([r[k] for r in runs])),
                "std": float(np.std([r[k] for r in runs])),
                "runs": len(runs)} for k in keys}


def cmd_eval(args):
    if args.aggregate:
        result = _aggregate(args.aggregate)
    else:
        if not (args.params and args.data):
            raise UsageError("eval needs --params and --data (or --aggregate)")
        params = io.read_params(args.params)
        ds = io.read_dataset(args.data)
        _check_match(params, ds, "params")
        truth = io.read_params(args.truth) if args.truth else ds.truth
        result = {"num_trajectories": ds.M, "nll": float(mean_nll(params, ds.Y))}
        if truth is not None:
            _check_match(truth, ds, "truth")
            result.update(recovery_report(params, truth, ds.Y))
        elif args.target_node is None:
            raise FormatError("no truth parameters in --truth or the dataset; "
                              "only --target-node metrics are defined without truth")
        if args.target_node is not None:
            u = args.target_node
            if not 0 <= u < ds.V:
                raise UsageError(f"--target-node {u} outside 0..{ds.V - 1}")
            probs = step_probabilities(params, ds.Y)[..., u]
            labels = ds.Y[:, ds.grid.Nprime:, u]
            cm = classification_metrics(probs, labels)
            result.update(tpr=cm.tpr, tnr=cm.tnr, ba=cm.ba, threshold=cm.threshold)
    text = json.dumps(result, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK


def build_parser():
    p = _Parser(prog="tulik", description="Discrete-time event models with uncertain event times.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress per epoch")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate a dataset from a preset or a params file")
    s.add_argument("--preset", choices=PRESETS)
    s.add_argument("--params")
    s.add_argument("--num", type=int, help="number of trajectories (preset default: training size)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--offset", type=int, default=0,
                   help="first trajectory index; use distinct ranges for train/test splits")
    s.add_argument("--redraw", type=int, default=0,
                   help="redraw a trajectory whose intensity turns nonpositive, up to this many times")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", help="fit baseline and kernel")
    t.add_argument("--data", required=True)
    t.add_argument("--method", choices=("vi", "gd"))
    t.add_argument("--config")
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True)
    t.add_argument("--report")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("predict", help="write event probabilities as CSV")
    r.add_argument("--params", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--mode", choices=("step", "interval"), default="step")
    r.add_argument("--from", dest="start", type=int)
    r.add_argument("--to", dest="stop", type=int)
    r.add_argument("--node", type=int)
    r.add_argument("--last", type=int,
                   help="index of the last observed event (default: last event up to --from)")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_predict)

    e = sub.add_parser("eval", help="relative errors and classification metrics as JSON")
    e.add_argument("--params")
    e.add_argument("--truth", help="truth params file (default: truth embedded in --data)")
    e.add_argument("--data")
    e.add_argument("--target-node", type=int)
    e.add_argument("--aggregate", nargs="+", metavar="EVAL_JSON",
                   help="mean and std over earlier eval outputs")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)
    return p


def _thread_limit():
    raw = os.environ.get("TULIK_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
        if n < 1:
            raise ValueError
    except ValueError:
        raise UsageError(f"TULIK_THREADS must be a positive integer, got {raw!r}") from None
    return n


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(message)s")
        limit = _thread_limit()
        with np.errstate(all="ignore"):
            if limit is None:
                return args.func(args)
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=limit):
                return args.func(args)
    except (UsageError, TulikError, OSError, ValueError, FloatingPointError) as err:
        code = _exit_code(err)
        print(f"tulik: error[{code}]: {type(err).__name__}: {_one_line(err)}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
