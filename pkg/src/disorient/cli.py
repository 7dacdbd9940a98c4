"""Command line entry point: ``disorient <subcommand> [options]``.

Exit codes: 0 success, 1 bad usage or contract violation, 2 I/O error.
Every subcommand computes all of its results before writing anything, so a
failed run leaves no partial outputs behind.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from datetime import date, datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from ._io import atomic_write_text, csv_text, file_digest, json_text, read_csv_rows
from .agreement import accuracy_ci, fleiss_kappa, read_rating_csv
from .classify import (ALGORITHMS, LabeledPost, LinearModel, PolarityLabel, evaluate,
                       model_select, train_nb, train_svm)
from .distest import (ALPHAS, EXACT_BOUND, basic_test, combined_outcomes_csv, outcomes_csv, running_test,
                      running_variance_test, window_sensitivity)
from .errors import ContractViolation, DisorientError
from .ingest import detect_peaks, ingest_jsonl, ingest_lines, interaction_series
from .polarity import PolaritySeries, aggregate, yearly_summary
from .report import FIGURES, PipelineParams, emit_figures, run_pipeline
from .simulate import PAPER_P0, TESTS, ScenarioConfig, calibrate_type1, labels_csv, paper_preset, simulate_posts
from .smoothfit import cv_bandwidth_series, fit_smoothed, smooth_series, trend_metrics
from .textprep import Vocabulary, build_vocabulary, featurize, tokenize

log = logging.getLogger("disorient")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _floats(s):
    try:
        return tuple(float(v) for v in s.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}")


def _ints(s):
    return tuple(int(v) for v in _floats(s))


def _span(s):
    try:
        a, b = s.split(",")
        return date.fromisoformat(a.strip()), date.fromisoformat(b.strip())
    except ValueError:
        raise argparse.ArgumentTypeError("expected START,END as ISO dates")


def _h_grid(s):
    vals = _floats(s)
    if len(vals) != 3 or vals[0] <= 0 or vals[1] <= vals[0] or vals[2] < 2:
        raise argparse.ArgumentTypeError("--h-grid needs lo,hi,n with 0 < lo < hi and n >= 2")
    return tuple(np.geomspace(vals[0], vals[1], int(vals[2])))


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--alpha", type=_floats, default=ALPHAS, help="e.g. 0.10,0.05,0.01")
    common.add_argument("--window", type=int, default=15, help="running window length (days)")
    common.add_argument("--mc-reps", type=int, default=100_000)
    common.add_argument("--exact-bound", type=int, default=EXACT_BOUND)
    common.add_argument("--h-grid", type=_h_grid, default=None, help="lo,hi,n (log-spaced)")
    common.add_argument("--config", default=None, help="scenario JSON for simulate/calibrate/report-all")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="disorient", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_)

    s = add("ingest", "load posts, write daily interactions and peaks")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--span", type=_span, default=None, help="START,END inclusive UTC dates")
    s.add_argument("--lang", default=None)
    s.add_argument("--min-prominence", type=float, default=None)

    s = add("train", "fit a polarity classifier from labeled posts")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--algorithm", choices=ALGORITHMS + ("select",), default="svm")
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--min-count", type=int, default=2)
    s.add_argument("--epochs", type=int, default=10)
    s.add_argument("--reg", type=float, default=1e-4)
    s.add_argument("--laplace-alpha", type=float, default=1.0)

    s = add("classify", "predict labels for posts with a trained model")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--vocab", required=True)

    s = add("eval", "compare predictions with reference labels")
    s.add_argument("--pred", required=True)
    s.add_argument("--labels", required=True)

    s = add("agree", "Fleiss' kappa for a rating matrix CSV")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--correct", type=int, default=None)
    s.add_argument("--total", type=int, default=None)
    s.add_argument("--level", type=float, default=0.95)

    s = add("aggregate", "daily polarity series and yearly summary")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--labels", required=True, help="post_id,label CSV")
    s.add_argument("--span", type=_span, default=None)
    s.add_argument("--boot-reps", type=int, default=1000)

    for name, help_ in (("test-basic", "daily test against yearly proportions"),
                        ("test-running", "daily test against the preceding window"),
                        ("test-variance", "running-variance chi-square test")):
        s = add(name, help_)
        s.add_argument("--in", dest="inp", required=True, help="polarity series CSV")
        if name == "test-running":
            s.add_argument("--w-grid", type=_ints, default=(7, 10, 15, 20, 30))

    for name in ("smooth", "fit"):
        s = add(name, "beta-kernel smoothing" if name == "smooth" else "stepwise polynomial trend")
        s.add_argument("--in", dest="inp", required=True, help="polarity series CSV")
        s.add_argument("--count-weighted", action="store_true")
        s.add_argument("--d-max", type=int, default=4)

    s = add("simulate", "generate a synthetic post stream")
    s.add_argument("--preset", choices=("paper",), default=None)

    s = add("calibrate", "type-I calibration of a daily test by simulation")
    s.add_argument("--test", choices=TESTS, default="basic")
    s.add_argument("--replicates", type=int, default=200)

    s = add("report-all", "full pipeline with figures")
    s.add_argument("--in", dest="inp", default=None, help="posts JSONL (default: simulate)")
    s.add_argument("--labels", default=None, help="post_id,label CSV (with --in)")
    s.add_argument("--boot-reps", type=int, default=1000)
    return p


# --- manifest --------------------------------------------------------------


def _config_hash(args) -> str:
    d = {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "verbose")}
    blob = json.dumps(d, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


class Run:
    """Collects outputs in memory, then writes them with one manifest."""

    def __init__(self, args, inputs):
        self.args = args
        self.started = datetime.now(timezone.utc).isoformat()
        self.inputs = {Path(p).name: file_digest(p) for p in inputs if p}
        core = {
            "subcommand": args.cmd,
            "config_hash": _config_hash(args),
            "input_digests": self.inputs,
            "seed": args.seed,
            "tool_version": __version__,
        }
        self.core = core
        self.hash = hashlib.sha256(json.dumps(core, sort_keys=True).encode()).hexdigest()[:16]
        self.files: dict[str, str] = {}

    @property
    def tag(self) -> str:
        return f"manifest {self.hash}"

    def csv(self, name, text_fn):
        self.files[name] = text_fn(self.tag)

    def json(self, name, obj):
        self.files[name] = json_text(dict(obj, manifest=self.hash))

    def text(self, name, text):
        self.files[name] = text

    def commit(self):
        out = Path(self.args.out)
        for name, text in sorted(self.files.items()):
            atomic_write_text(out / name, text)
        manifest = dict(self.core, manifest_hash=self.hash, outputs=sorted(self.files),
                        timestamps={"started": self.started,
                                    "finished": datetime.now(timezone.utc).isoformat()})
        atomic_write_text(out / "manifest.json", json_text(manifest))


# --- helpers ---------------------------------------------------------------


def _require(*paths):
    for p in paths:
        if p and not Path(p).is_file():
            raise FileNotFoundError(f"input file not found: {p}")


def _read_labels(path) -> dict:
    rows = read_csv_rows(path)
    try:
        return {r["post_id"]: PolarityLabel.parse(r["label"]) for r in rows}
    except KeyError as exc:
        raise ContractViolation(f"{path}: missing column {exc}") from None


def _scenario(args, null=False) -> ScenarioConfig:
    """Scenario from ``--config``; otherwise the built-in preset, or its
    constant-proportion counterpart when ``null`` is requested."""
    if null and not args.config:
        return paper_preset(seed=args.seed, trajectory={"kind": "constant", "p": list(PAPER_P0)})
    if args.config:
        cfg = ScenarioConfig.from_json(Path(args.config).read_text(encoding="utf-8"))
        return ScenarioConfig.from_dict({**json.loads(cfg.to_json()), "seed": args.seed})
    return paper_preset(seed=args.seed)


def _summary_dict(summ) -> dict:
    return summ.to_dict()


def _trend_dict(trends, metrics=None) -> dict:
    d = {name: fit.to_dict() for name, fit in zip("FCU", trends)}
    if metrics:
        m = dict(metrics)
        m["peak_date"] = m["peak_date"].isoformat()
        m["amplitude"] = list(m["amplitude"])
        d["metrics_F"] = m
    return d


# --- subcommands -----------------------------------------------------------


def cmd_ingest(args):
    _require(args.inp)
    run = Run(args, [args.inp])
    corpus = ingest_jsonl(args.inp, window=args.span, lang=args.lang)
    inter = interaction_series(corpus)
    prom = args.min_prominence or max(1.0, 3.0 * float(np.median(inter.interactions)))
    peaks = detect_peaks(inter, prom)
    run.csv("interactions.csv", inter.to_csv)
    run.json("ingest.json", {
        "stats": vars(corpus.ingest_stats) if hasattr(corpus.ingest_stats, "__dict__") else {},
        "posts": len(corpus),
        "min_prominence": prom,
        "peaks": [[d.isoformat(), v] for d, v in peaks],
    })
    return run


def _featurize_posts(corpus, vocab):
    return {p.id: featurize(tokenize(p.text), vocab) for p in corpus.posts}


def cmd_train(args):
    _require(args.inp, args.labels)
    run = Run(args, [args.inp, args.labels])
    corpus = ingest_jsonl(args.inp)
    labels = _read_labels(args.labels)
    by_id = corpus.by_id()
    missing = [k for k in labels if k not in by_id]
    if missing:
        raise ContractViolation(f"{len(missing)} labeled ids not in posts, e.g. {missing[:5]}")
    ids = [p.id for p in corpus.posts if p.id in labels]
    toks = {i: tokenize(by_id[i].text) for i in ids}
    vocab = build_vocabulary([toks[i] for i in ids], args.min_count)
    data = [LabeledPost(i, featurize(toks[i], vocab), labels[i]) for i in ids]
    algorithm = args.algorithm
    params = {"svm": {"epochs": args.epochs, "reg": args.reg},
              "nb": {"laplace_alpha": args.laplace_alpha}}
    if algorithm == "select":
        algorithm, reports = model_select(data, args.folds, ALGORITHMS, args.seed, params)
        run.json("selection.json", {"best": algorithm,
                                    "reports": {a: r.to_dict() for a, r in reports.items()}})
        if algorithm == "knn":
            log.warning("k-NN selected; storing the SVM as the deployable linear model")
            algorithm = "svm"
    if algorithm == "nb":
        model = train_nb(data, args.laplace_alpha)
    elif algorithm == "svm":
        model = train_svm(data, args.epochs, args.reg, args.seed)
    else:
        raise ContractViolation("k-NN has no stored model; use --algorithm select to compare it")
    vocab_text = vocab.to_json()
    model.vocab_ref = hashlib.sha256(vocab_text.encode()).hexdigest()[:16]
    run.text("vocab.json", vocab_text + "\n")
    run.text("model.json", model.to_json())
    return run


def cmd_classify(args):
    _require(args.inp, args.model, args.vocab)
    run = Run(args, [args.inp, args.model, args.vocab])
    vocab = Vocabulary.from_json(Path(args.vocab).read_text(encoding="utf-8"))
    model = LinearModel.from_json(Path(args.model).read_text(encoding="utf-8"))
    corpus = ingest_jsonl(args.inp)
    feats = _featurize_posts(corpus, vocab)
    ids = list(feats)
    preds = model.predict_many([feats[i] for i in ids])
    run.csv("predictions.csv", lambda c: csv_text(("post_id", "label"),
                                                  [(i, p.value) for i, p in zip(ids, preds)], c))
    return run


def cmd_eval(args):
    _require(args.pred, args.labels)
    run = Run(args, [args.pred, args.labels])
    pred, truth = _read_labels(args.pred), _read_labels(args.labels)
    common = [k for k in truth if k in pred]
    if not common:
        raise ContractViolation("no overlapping post ids between predictions and labels")
    report = evaluate([pred[k] for k in common], [truth[k] for k in common])
    n_ok = sum(pred[k] == truth[k] for k in common)
    point, lo, hi = accuracy_ci(n_ok, len(common))
    print(report.table())
    run.json("eval.json", dict(report.to_dict(), accuracy_ci95=[lo, hi], evaluated=len(common)))
    return run


def cmd_agree(args):
    _require(args.inp)
    run = Run(args, [args.inp])
    m = read_rating_csv(args.inp)
    out = {"fleiss_kappa": fleiss_kappa(m), "items": int(m.shape[0]),
           "categories": int(m.shape[1]), "raters_per_item": int(m[0].sum())}
    if args.correct is not None and args.total is not None:
        point, lo, hi = accuracy_ci(args.correct, args.total, args.level)
        out["accuracy"] = {"point": point, "lower": lo, "upper": hi, "level": args.level,
                           "method": "clopper-pearson"}
    print(f"Fleiss' kappa = {out['fleiss_kappa']:.3f}")
    run.json("agreement.json", out)
    return run


def cmd_aggregate(args):
    _require(args.inp, args.labels)
    run = Run(args, [args.inp, args.labels])
    corpus = ingest_jsonl(args.inp)
    series = aggregate(corpus, _read_labels(args.labels), args.span)
    summ = yearly_summary(series, args.boot_reps, args.seed)
    run.csv("polarity.csv", series.to_csv)
    run.json("summary.json", _summary_dict(summ))
    return run


def _load_series(args):
    _require(args.inp)
    return PolaritySeries.read_csv(args.inp)


def cmd_test(args):
    series = _load_series(args)
    run = Run(args, [args.inp])
    kw = dict(exact_bound=args.exact_bound, mc_reps=args.mc_reps, seed=args.seed)
    extra = {}
    if args.cmd == "test-basic":
        summ = yearly_summary(series, 1000, args.seed)
        outcomes, ts = basic_test(series, summ, args.alpha, **kw)
    elif args.cmd == "test-running":
        outcomes, ts = running_test(series, args.window, args.alpha, **kw)
        grid = [w for w in args.w_grid if w < len(series)]
        extra["window_sensitivity"] = {str(w): s.to_dict()
                                       for w, s in window_sensitivity(series, grid, 0.05, **kw).items()}
    else:
        outcomes, ts = running_variance_test(series, args.window, None, args.alpha)
    run.csv("outcomes.csv", lambda c: outcomes_csv(outcomes, c))
    run.json("test_summary.json", dict(ts.to_dict(), test=args.cmd, **extra))
    return run


def cmd_smooth(args):
    series = _load_series(args)
    run = Run(args, [args.inp])
    cv = cv_bandwidth_series(series, args.h_grid, count_weighted=args.count_weighted)
    sm = smooth_series(series, cv.h, args.count_weighted)
    run.csv("smoothed.csv", sm.to_csv)
    run.json("bandwidth.json", {"h": cv.h, "constant_series": cv.constant,
                                "grid": list(map(float, cv.grid)),
                                "loo_scores": list(map(float, cv.scores))})
    return run


def cmd_fit(args):
    series = _load_series(args)
    run = Run(args, [args.inp])
    cv = cv_bandwidth_series(series, args.h_grid, count_weighted=args.count_weighted)
    sm = smooth_series(series, cv.h, args.count_weighted)
    trends = [fit_smoothed(sm, k, args.d_max) for k in range(3)]
    run.json("trend.json", dict(_trend_dict(trends, trend_metrics(sm, trends[0])), h=cv.h))
    return run


def cmd_simulate(args):
    if args.config:
        _require(args.config)
    cfg = _scenario(args)
    run = Run(args, [args.config])
    lines, ledger = simulate_posts(cfg)
    from .simulate import simulate_series
    series, _ = simulate_series(cfg)
    run.text("posts.jsonl", "\n".join(lines) + ("\n" if lines else ""))
    run.text("labels.csv", labels_csv(ledger.labels))
    run.csv("polarity.csv", series.to_csv)
    run.json("ledger.json", ledger.to_dict())
    run.text("scenario.json", cfg.to_json())
    return run


def cmd_calibrate(args):
    if args.config:
        _require(args.config)
    cfg = _scenario(args, null=True)
    run = Run(args, [args.config])
    kw = {} if args.test == "variance" else dict(exact_bound=args.exact_bound, mc_reps=args.mc_reps)
    res = calibrate_type1(args.test, cfg, args.replicates, args.alpha, w=args.window, **kw)
    out = {f"{a:.2f}": {"mean": r["mean"], "ci95": list(r["ci95"])} for a, r in res.items()}
    for a, r in res.items():
        print(f"alpha={a:.2f}: mean flagged fraction {r['mean']:.4f} "
              f"(95% CI {r['ci95'][0]:.4f}-{r['ci95'][1]:.4f})")
    run.json("calibration.json", {"test": args.test, "replicates": args.replicates, "alphas": out})
    return run


def cmd_report_all(args):
    if args.inp:
        _require(args.inp, args.labels)
        if not args.labels:
            raise ContractViolation("--in requires --labels")
        run = Run(args, [args.inp, args.labels])
        corpus = ingest_jsonl(args.inp)
        labels = _read_labels(args.labels)
    else:
        if args.config:
            _require(args.config)
        cfg = _scenario(args)
        run = Run(args, [args.config])
        lines, ledger = simulate_posts(cfg)
        corpus = ingest_lines(lines)
        labels = ledger.labels
    params = PipelineParams(alphas=args.alpha, window=args.window, mc_reps=args.mc_reps,
                            exact_bound=args.exact_bound, boot_reps=args.boot_reps,
                            seed=args.seed,
                            **({"h_grid": args.h_grid} if args.h_grid else {}))
    a = run_pipeline(corpus, labels, params)
    a["window"] = args.window
    run.csv("interactions.csv", a["interactions"].to_csv)
    run.csv("polarity.csv", a["series"].to_csv)
    run.csv("smoothed.csv", a["smoothed"].to_csv)
    run.csv("tests.csv", lambda c: combined_outcomes_csv(
        {t: a[t][0] for t in ("basic", "running", "variance")}, c))
    run.json("summary.json", {
        "ingest": vars(corpus.ingest_stats),
        "yearly": a["summary"].to_dict(),
        "peaks": [[d.isoformat(), v] for d, v in a["peaks"]],
        "tests": {t: a[t][1].to_dict() for t in ("basic", "running", "variance")},
        "window_sensitivity": {str(w): s.to_dict() for w, s in a["sensitivity"].items()},
        "bandwidth": a["cv"].h,
    })
    run.json("trend.json", _trend_dict(a["trend"], a["trend_metrics"]))
    for name, text in emit_figures(a, run.tag).items():
        run.text(f"{name}.svg", text)
    return run


COMMANDS = {
    "ingest": cmd_ingest, "train": cmd_train, "classify": cmd_classify, "eval": cmd_eval,
    "agree": cmd_agree, "aggregate": cmd_aggregate, "test-basic": cmd_test,
    "test-running": cmd_test, "test-variance": cmd_test, "smooth": cmd_smooth, "fit": cmd_fit,
    "simulate": cmd_simulate, "calibrate": cmd_calibrate, "report-all": cmd_report_all,
}


def cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"disorient: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run = COMMANDS[args.cmd](args)
        run.commit()
    except (ContractViolation, DisorientError, ValueError) as exc:
        print(f"disorient: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"disorient: I/O error: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(cli())


if __name__ == "__main__":
    main()
