"""Command-line entry point: ``gprsparse <subcommand> ...``.

Every command that writes a file also writes ``<file>.prov.json`` with the
resolved arguments and library versions. No timestamps are recorded, so the
same command line reproduces the same bytes.

Failures print a single ``error: <kind>: <message>`` line on stderr and
exit with status 1. Bad usage exits with status 2 and prints the usage
text on stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__


def _thread_cap():
    """``SGPR_THREADS`` as a thread count; 0 or unset-but-empty means sequential."""
    raw = os.environ.get("SGPR_THREADS")
    if raw is None or raw.strip() == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"SGPR_THREADS must be a non-negative integer, got {raw!r}") from None
    if n < 0:
        raise ValueError(f"SGPR_THREADS must be a non-negative integer, got {raw!r}")
    return max(n, 1)


# --- provenance ---------------------------------------------------------------


def _versions():
    import scipy

    return {"gprsparse": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


def write_provenance(out, args, extra=None):
    """Write ``<out>.prov.json`` describing how ``out`` was made."""
    cfg = {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k != "func"}
    payload = {"output": str(out), "command": args.command, "arguments": cfg,
               "versions": _versions(), "threads": os.environ.get("SGPR_THREADS", "")}
    if extra:
        payload.update(extra)
    Path(f"{out}.prov.json").write_text(json.dumps(payload, indent=2, sort_keys=True, default=repr) + "\n")


# --- argument helpers -----------------------------------------------------------


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _stop(text):
    from .sparse_coding import StopRule

    try:
        return StopRule.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _learn_config(args):
    from .dictionary_learning import LearnConfig

    kw = {"seed": args.seed}
    for name in ("K", "n_iter", "batch_new", "batch_prev", "drop_age", "delta", "chi", "lam",
                 "max_sparsity", "prox", "odl_prox"):
        v = getattr(args, name, None)
        if v is not None:
            kw[name] = v
    return LearnConfig(**kw)


def _add_learn_flags(p):
    g = p.add_argument_group("learning parameters (defaults from LearnConfig)")
    g.add_argument("--K", type=int, help="number of atoms")
    g.add_argument("--n-iter", dest="n_iter", type=int, help="iterations (N_t)")
    g.add_argument("--batch-new", dest="batch_new", type=int, help="new elements per iteration (N_b)")
    g.add_argument("--batch-prev", dest="batch_prev", type=int, help="previous elements per iteration (N_r)")
    g.add_argument("--drop-age", dest="drop_age", type=int, help="drop-off age (N_u)")
    g.add_argument("--delta", type=float, help="batch-OMP residual threshold")
    g.add_argument("--chi", type=float, help="DOMINODL stopping level")
    g.add_argument("--lam", type=float, help="ODL l1 weight")
    g.add_argument("--max-sparsity", dest="max_sparsity", type=int, help="atoms per code cap")
    g.add_argument("--prox", type=float, help="CBWLSU/DOMINODL refit damping")
    g.add_argument("--odl-prox", dest="odl_prox", type=float, help="ODL prior weight")


def _read_labeled(path):
    from .io import read_dataset

    return read_dataset(path)


# --- subcommands -------------------------------------------------------------------


def cmd_simulate(args):
    from . import signal_model as sm
    from .classify import HaloSpec, write_halos
    from .io import write_bscan, write_dataset

    acq = sm.AcquisitionSpec(sample_count=args.samples, noise_std=args.noise, seed=args.seed,
                             permittivity=args.permittivity)
    if args.kind == "dataset":
        classes = sm.default_classes()
        if len(args.counts) != len(classes):
            raise ValueError(f"--counts needs {len(classes)} values")
        ds = sm.generate_dataset(counts=args.counts, acq=acq, seed=args.seed)
        write_dataset(args.output, ds)
        extra = {"columns": ds.L}
    elif args.kind == "survey":
        nx, ny = args.grid
        ds, targets = sm.generate_survey(nx, ny, acq=acq, seed=args.seed)
        write_dataset(args.output, ds)
        halos = [HaloSpec.rectangle(t.target_id, t.class_index, t.x0, t.y0, t.x1, t.y1) for t in targets]
        halo_path = args.halos or str(Path(args.output).with_suffix(".halos.csv"))
        write_halos(halo_path, halos, ds.class_names)
        write_provenance(halo_path, args)
        extra = {"columns": ds.L, "grid": [nx, ny], "halos": halo_path}
    else:
        x0, depth = args.target
        positions = np.arange(args.traces) * args.dx
        b = sm.synthesize_bscan(x0, depth, acq, positions)
        write_bscan(args.output, b)
        extra = {"traces": args.traces}
    write_provenance(args.output, args, extra)


def cmd_preprocess(args):
    from .io import read_bscan, write_bscan
    from .preprocess import parse_pipeline, run_pipeline

    parse_pipeline(args.ops)  # reject bad op strings before reading
    b = run_pipeline(read_bscan(args.input), args.ops)
    write_bscan(args.output, b)
    write_provenance(args.output, args)


def cmd_code(args):
    from .classify import extract_features
    from .io import read_bscan, read_dictionary, write_codes

    D = read_dictionary(args.dictionary)
    Y = read_bscan(args.input).data
    write_codes(args.output, extract_features(Y, D, args.stop))
    write_provenance(args.output, args)


def cmd_learn(args):
    from .dictionary_learning import learn
    from .io import write_dictionary

    ds = _read_labeled(args.input)
    D, _, report = learn(args.algo, ds.Y, _learn_config(args))
    write_dictionary(args.output, D)
    write_provenance(args.output, args, {"iterations": report.iterations,
                                         "stop_reason": report.stop_reason})
    if args.report:
        with open(args.report, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for row in report.rows():
                w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        write_provenance(args.report, args)


def cmd_eval(args):
    from .evaluation import histogram, parameter_sweep, parse_grid

    grid = parse_grid(Path(args.grid).read_text())
    ds = _read_labeled(args.input)
    reports = parameter_sweep(args.algo, grid, ds.Y, base=_learn_config(args), alpha=args.alpha)
    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["params", "mean", "std", "cv", "d_ks", "d_dkw", "alpha"])
        for r in reports:
            params = ";".join(f"{k}={v}" for k, v in r.params.items())
            w.writerow([params] + [repr(float(getattr(r, f))) for f in r.FIELDS])
    write_provenance(args.output, args)
    if args.hist:
        hists = [histogram(r.samples, args.bin_width) for r in reports]
        edges = hists[0][0]
        with open(args.hist, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_lo", "bin_hi"] + [f"point{i}" for i in range(len(reports))])
            for b in range(len(edges) - 1):
                w.writerow([repr(float(edges[b])), repr(float(edges[b + 1]))]
                           + [repr(float(h[1][b])) for h in hists])
        write_provenance(args.hist, args)


def cmd_train(args):
    from .classify import ClassifierParams, extract_features, train_classifier
    from .io import read_dictionary

    ds = _read_labeled(args.input)
    D = read_dictionary(args.dictionary)
    model = train_classifier(extract_features(ds.Y, D, args.stop), ds.labels,
                             ClassifierParams(C=args.C, epochs=args.epochs, seed=args.seed),
                             ds.class_names)
    body = model.to_dict()
    body["stop"] = {"max_sparsity": args.stop.max_sparsity, "residual_threshold": args.stop.residual_threshold}
    Path(args.output).write_text(json.dumps(body, sort_keys=True) + "\n")
    write_provenance(args.output, args, {"training_accuracy": model.training_accuracy})


def _load_model(path):
    from .classify import ClassifierModel
    from .sparse_coding import StopRule

    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {p}")
    body = json.loads(p.read_text())
    stop = StopRule(**body.pop("stop")) if "stop" in body else None
    return ClassifierModel.from_dict(body), stop


def cmd_classify(args):
    from .classify import extract_features, predict, render_map
    from .io import read_bscan, read_dictionary

    model, stop = _load_model(args.model)
    stop = args.stop or stop
    D = read_dictionary(args.dictionary)
    Y = read_bscan(args.input).data
    pred = predict(model, extract_features(Y, D, stop))
    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["profile", "predicted", "class"])
        for j, c in enumerate(pred):
            w.writerow([j, int(c), model.class_names[c]])
    write_provenance(args.output, args)
    if args.map:
        if not args.grid:
            raise ValueError("--map needs --grid NX,NY")
        render_map(pred, *args.grid, args.map, len(model.class_names))
        for suffix in (".pgm", ".csv"):
            write_provenance(str(Path(args.map).with_suffix(suffix)), args)


def read_predictions(path):
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {p}")
    with open(p, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r][1:]
    return np.array([int(r[1]) for r in rows], dtype=np.int64)


def write_confusion(path, cm):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["predicted\\truth"] + list(cm.class_names))
        for name, row in zip(cm.class_names, cm.matrix):
            w.writerow([name] + [repr(float(v)) for v in row])


def cmd_score(args):
    from .classify import confusion, halo_scores, map_grid, read_halos

    truth = _read_labeled(args.truth)
    pred = read_predictions(args.predictions)
    cm = confusion(pred, truth.labels, truth.class_names)
    rows = [("accuracy", cm.accuracy)] + [(f"pcc_{n}", v) for n, v in zip(cm.class_names, cm.pcc)]
    if args.halos:
        if not args.grid:
            raise ValueError("--halos needs --grid NX,NY")
        hs = halo_scores(map_grid(pred, *args.grid), read_halos(args.halos, truth.class_names),
                         threshold=args.threshold)
        rows += [(f"halo_pcc_{truth.class_names[c]}", v) for c, v in hs.pcc_mines.items()]
        rows += [("halo_pcc_clutter", hs.pcc_clutter), ("p_d", hs.p_d), ("p_fa", hs.p_fa)]
    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value"])
        for k, v in rows:
            w.writerow([k, repr(float(v))])
    write_provenance(args.output, args)
    if args.confusion:
        write_confusion(args.confusion, cm)
        write_provenance(args.confusion, args)


def _read_csv(path):
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {p}")
    with open(p, newline="") as fh:
        return [r for r in csv.reader(fh) if r]


def _table(rows):
    widths = [max(len(str(r[i])) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(str(c).rjust(w) for c, w in zip(r, widths)) for r in rows)


def _num(v):
    try:
        return f"{float(v):.3f}"
    except ValueError:
        return v


def render_report(confusions=(), scores=(), timings=()):
    """Aligned-text summary of confusion, score and timing CSV files."""
    parts = []
    for path in confusions:
        rows = _read_csv(path)
        parts.append(f"Confusion matrix ({path}); columns are ground truth\n"
                     + _table([rows[0]] + [[r[0]] + [_num(v) for v in r[1:]] for r in rows[1:]]))
    for path in scores:
        rows = _read_csv(path)
        parts.append(f"Scores ({path})\n" + _table([rows[0]] + [[r[0], _num(r[1])] for r in rows[1:]]))
    for path in timings:
        rows = _read_csv(path)
        parts.append(f"Timing ({path})\n" + _table(rows))
    return "\n\n".join(parts) + "\n"


def cmd_report(args):
    if not (args.confusion or args.scores or args.timing):
        raise ValueError("nothing to report; pass --confusion, --scores or --timing")
    text = render_report(args.confusion or (), args.scores or (), args.timing or ())
    if args.output:
        Path(args.output).write_text(text)
        write_provenance(args.output, args)
    else:
        sys.stdout.write(text)


def cmd_bench(args):
    from .dictionary_learning import LEARNERS, complexity_probe

    ds = _read_labeled(args.input)
    for a in args.algos:
        if a not in LEARNERS:
            raise ValueError(f"unknown algorithm {a!r}")
    sizes = [{"K": k} for k in args.K_grid] if args.K_grid else [{}]
    rows = complexity_probe(args.algos, sizes, ds.Y, _learn_config(args), repeats=args.repeats)
    keys = ["algorithm"] + (["K"] if args.K_grid else []) + ["wall_time", "iterations"]
    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in rows:
            w.writerow([repr(r[k]) if isinstance(r[k], float) else r[k] for k in keys])
    write_provenance(args.output, args)


# --- parser ----------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="global seed (default 0)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    ap = argparse.ArgumentParser(prog="gprsparse", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_, description=help_)
        p.set_defaults(func=func)
        return p

    p = add("simulate", cmd_simulate, "synthesise a labeled dataset, a survey grid or a B-scan")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--kind", choices=("dataset", "survey", "bscan"), default="dataset")
    p.add_argument("--counts", type=_ints, default=[463, 168, 167, 128],
                   help="profiles per class (dataset)")
    p.add_argument("--grid", type=_ints, default=[60, 15], help="NX,NY pixels (survey)")
    p.add_argument("--halos", help="halo CSV path (survey; default <output>.halos.csv)")
    p.add_argument("--target", type=_floats, default=[0.32, 0.15], help="X0,DEPTH in m (bscan)")
    p.add_argument("--traces", type=int, default=64, help="traces (bscan)")
    p.add_argument("--dx", type=float, default=0.01, help="trace spacing in m (bscan)")
    p.add_argument("--samples", type=int, default=211, help="samples per profile")
    p.add_argument("--noise", type=float, default=0.002, help="noise standard deviation")
    p.add_argument("--permittivity", type=float, default=4.0)

    p = add("preprocess", cmd_preprocess, "apply a preprocessing pipeline to a B-scan")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--ops", required=True, help="e.g. dewow:31,bg-pca:2,gate:40:400")

    p = add("code", cmd_code, "sparse-code profiles against a dictionary")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-d", "--dictionary", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--stop", type=_stop, default="s=4", help="s=N and/or delta=X")

    p = add("learn", cmd_learn, "learn a dictionary from a labeled dataset")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--algo", choices=("ksvd", "odl", "cbwlsu", "dominodl"), required=True)
    p.add_argument("--report", help="per-iteration report CSV")
    _add_learn_flags(p)

    p = add("eval", cmd_eval, "sweep learning parameters and compare similarity distributions")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True, help="metric CSV")
    p.add_argument("--algo", choices=("ksvd", "odl", "cbwlsu", "dominodl"), required=True)
    p.add_argument("--grid", required=True, help="file with one key=value,... line per point")
    p.add_argument("--hist", help="histogram CSV")
    p.add_argument("--bin-width", dest="bin_width", type=float, default=0.01)
    p.add_argument("--alpha", type=float, default=0.05)
    _add_learn_flags(p)

    p = add("train", cmd_train, "train the linear classifier on sparse-code features")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-d", "--dictionary", required=True)
    p.add_argument("-o", "--output", required=True, help="model JSON")
    p.add_argument("--stop", type=_stop, default="s=4")
    p.add_argument("--C", type=float, default=10.0)
    p.add_argument("--epochs", type=int, default=30)

    p = add("classify", cmd_classify, "predict classes and optionally render a class map")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-d", "--dictionary", required=True)
    p.add_argument("-m", "--model", required=True)
    p.add_argument("-o", "--output", required=True, help="prediction CSV")
    p.add_argument("--stop", type=_stop, default=None, help="defaults to the model's")
    p.add_argument("--map", help="map path stem; writes .pgm and .csv")
    p.add_argument("--grid", type=_ints, help="NX,NY survey grid")

    p = add("score", cmd_score, "confusion matrix, P_CC and halo detection scores")
    p.add_argument("-p", "--predictions", required=True)
    p.add_argument("-t", "--truth", required=True, help="labeled dataset with the ground truth")
    p.add_argument("-o", "--output", required=True, help="score CSV")
    p.add_argument("--confusion", help="confusion CSV")
    p.add_argument("--halos", help="halo CSV")
    p.add_argument("--grid", type=_ints, help="NX,NY survey grid")
    p.add_argument("--threshold", type=float, default=2 / 3, help="halo detection fraction")

    p = add("report", cmd_report, "render score, confusion and timing files as text")
    p.add_argument("--confusion", action="append")
    p.add_argument("--scores", action="append")
    p.add_argument("--timing", action="append")
    p.add_argument("-o", "--output")

    p = add("bench", cmd_bench, "time the learners")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--algos", type=lambda s: s.split(","), default=["dominodl", "odl", "cbwlsu", "ksvd"])
    p.add_argument("--K-grid", dest="K_grid", type=_ints)
    p.add_argument("--repeats", type=int, default=1)
    _add_learn_flags(p)
    return ap


def run(argv=None):
    """Parse ``argv`` and run the subcommand; returns the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cap = _thread_cap()
        if cap is None:
            args.func(args)
        else:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=cap):
                args.func(args)
    except Exception as exc:  # one machine-parsable line, no traceback
        kind = type(exc).__name__
        msg = " ".join(str(exc).split()) or kind
        print(f"error: {kind}: {msg}", file=sys.stderr)
        return 1
    return 0


def main(argv=None):
    sys.exit(run(argv))
