"""Command-line entry point for the full pipeline.

Exit codes: 0 success, 1 validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments, features, learners, selection, trace_parser, workloadgen
from .errors import FtraceKitError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(1)


def _build_parser() -> _Parser:
    p = _Parser(prog="ftracekit",
                description="function_graph traces -> features -> experiments")
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="generate a synthetic labeled corpus")
    g.add_argument("--profiles", default="default2",
                   choices=sorted(workloadgen.PROFILE_SETS))
    g.add_argument("--count", type=int, default=50,
                   help="traces per profile")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--roots", type=int, default=30,
                   help="root calls per trace")
    g.add_argument("--multi-cpu", action="store_true")
    g.add_argument("--abstime", action="store_true")

    pa = sub.add_parser("parse", help="parse one trace file to records JSON")
    pa.add_argument("--input", required=True)
    pa.add_argument("--out", required=True)
    pa.add_argument("--strict", action="store_true")

    fe = sub.add_parser("features", help="extract a feature CSV from a corpus")
    fe.add_argument("--corpus", required=True)
    fe.add_argument("--out", required=True)
    fe.add_argument("--vocab", help="also write the vocabulary JSON here")
    fe.add_argument("--strict", action="store_true")

    se = sub.add_parser("select", help="chi-squared feature ranking")
    se.add_argument("--features", required=True, help="feature CSV")
    se.add_argument("--k", type=int, default=60)
    se.add_argument("--out", required=True, help="scores CSV")

    tr = sub.add_parser("train", help="fit a model on a feature CSV")
    tr.add_argument("--features", required=True)
    tr.add_argument("--learner", default="forest",
                    choices=["tree", "forest", "boosting", "logistic"])
    tr.add_argument("--params", default="{}", help="JSON hyperparameters")
    tr.add_argument("--seed", type=int, required=True)
    tr.add_argument("--out", required=True, help="model JSON")

    ev = sub.add_parser("eval", help="evaluate a saved model")
    ev.add_argument("--model", required=True)
    ev.add_argument("--features", required=True)
    ev.add_argument("--out", help="metrics JSON (default: stdout only)")

    cu = sub.add_parser("curve", help="learning-curve analysis")
    _common_study_flags(cu)
    cu.add_argument("--fractions", default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")

    pe = sub.add_parser("perturb", help="per-feature noise robustness")
    _common_study_flags(pe)
    pe.add_argument("--sigmas", default="0.1,0.2,0.5,1.0")

    ab = sub.add_parser("ablate", help="feature-group ablation study")
    _common_study_flags(ab)

    e1 = sub.add_parser("exp1", help="binary encryption-detection experiment")
    e1.add_argument("--corpus", required=True)
    e1.add_argument("--seed", type=int, required=True)
    e1.add_argument("--k", type=int, default=60)
    e1.add_argument("--learner", default="boosting",
                    choices=["tree", "forest", "boosting", "logistic"])
    e1.add_argument("--out", required=True, help="output directory")

    e2 = sub.add_parser("exp2", help="multi-label task-identification experiment")
    e2.add_argument("--corpus", required=True)
    e2.add_argument("--seed", type=int, required=True)
    e2.add_argument("--k", type=int, default=40)
    e2.add_argument("--out", required=True, help="output directory")
    return p


def _common_study_flags(sp):
    sp.add_argument("--features", required=True, help="feature CSV")
    sp.add_argument("--learner", default="forest",
                    choices=["tree", "forest", "boosting", "logistic"])
    sp.add_argument("--params", default="{}", help="JSON hyperparameters")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", required=True, help="output CSV")


def _records_to_dict(rec: trace_parser.CallRecord) -> dict:
    return {"name": rec.name, "cpu": rec.cpu, "depth": rec.depth,
            "duration_us": rec.duration_us, "start_time": rec.start_time,
            "end_time": rec.end_time, "parent_name": rec.parent_name,
            "children": [_records_to_dict(c) for c in rec.children]}


def _write_table_csv(path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(
            f"{v:.9g}" if isinstance(v, float) else str(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def cmd_gen(args) -> int:
    profiles = workloadgen.profiles_by_name(args.profiles)
    manifest = workloadgen.generate_corpus(
        profiles, args.count, args.seed, args.out, n_root_calls=args.roots,
        multi_cpu=args.multi_cpu, abstime=args.abstime)
    print(f"gen: wrote {len(manifest['entries'])} traces to {args.out}")
    return 0


def cmd_parse(args) -> int:
    options = trace_parser.ParserOptions(strict=args.strict)
    sample = trace_parser.load_sample(args.input, options)
    out = {
        "source": sample.source,
        "has_abstime": sample.has_abstime,
        "warnings": sample.warnings,
        "records": {str(cpu): [_records_to_dict(r) for r in roots]
                    for cpu, roots in sorted(sample.records.items())},
    }
    Path(args.out).write_text(json.dumps(out, indent=2))
    print(f"parse: {sample.record_count()} records, "
          f"{len(sample.warnings)} warnings -> {args.out}")
    return 0


def cmd_features(args) -> int:
    options = trace_parser.ParserOptions(strict=args.strict)
    samples = trace_parser.load_corpus(args.corpus, options)
    vocab = features.build_vocabulary(samples)
    matrix = features.extract_matrix(samples, vocab)
    features.write_csv(matrix, args.out)
    if args.vocab:
        Path(args.vocab).write_text(vocab.to_json())
    print(f"features: {matrix.n_rows} rows x {len(vocab.columns)} columns "
          f"-> {args.out}")
    return 0


def cmd_select(args) -> int:
    m = features.read_csv(args.features)
    scaled = features.minmax_fit_transform(m)
    scores = selection.chi2_scores(scaled, m.labels)
    top = selection.select_top_k(scores, min(args.k, len(scores)))
    keep = [s for s in scores if s.name in set(top)]
    selection.write_scores_csv(keep, args.out)
    print(f"select: top {len(top)} of {len(scores)} features -> {args.out}")
    return 0


def cmd_train(args) -> int:
    m = features.read_csv(args.features)
    params = json.loads(args.params)
    model = learners.train(args.learner, m.X, m.labels, params, args.seed,
                           m.vocab.column_names)
    learners.save_model(model, args.out)
    acc = learners.evaluate(model, m.X, m.labels).accuracy
    print(f"train: {args.learner} fit on {m.n_rows} rows, "
          f"train accuracy {acc:.4f} -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    model = learners.load_model(args.model)
    m = features.read_csv(args.features)
    kept = m.subset_columns(model.feature_names)
    metrics = learners.evaluate(model, kept.X, m.labels)
    text = json.dumps(metrics.as_dict(), indent=2)
    if args.out:
        Path(args.out).write_text(text)
    print(f"eval: accuracy {metrics.accuracy:.4f} f1 {metrics.f1:.4f} "
          f"auc {metrics.roc_auc:.4f}")
    return 0


def cmd_curve(args) -> int:
    m = features.read_csv(args.features)
    fractions = [float(f) for f in args.fractions.split(",")]
    rows = experiments.learning_curve(m, m.labels, args.learner,
                                      json.loads(args.params),
                                      fractions=fractions, seed=args.seed)
    _write_table_csv(args.out,
                     ["fraction", "train_mean", "train_std", "val_mean", "val_std"],
                     [[r["fraction"], r["train_mean"], r["train_std"],
                       r["val_mean"], r["val_std"]] for r in rows])
    print(f"curve: {len(rows)} fractions -> {args.out}")
    return 0


def cmd_perturb(args) -> int:
    m = features.read_csv(args.features)
    sigmas = [float(s) for s in args.sigmas.split(",")]
    spec = experiments.SplitSpec(seed=args.seed)
    tr, va, te = experiments.stratified_split_indices(m.labels, spec)
    fit_idx = np.sort(np.concatenate([tr, va]))
    pool = features.zscore_fit_transform(m.subset_rows(fit_idx))
    test = features.zscore_apply(m.subset_rows(te), pool.scaling)
    table = experiments.perturbation_study(pool, test, args.learner,
                                           json.loads(args.params),
                                           sigmas=sigmas, seed=args.seed)
    header = ["feature"] + [f"sigma_{s:g}" for s in table["sigmas"]]
    _write_table_csv(args.out, header,
                     [[n] + row for n, row in
                      zip(table["features"], table["accuracy"])])
    print(f"perturb: {len(table['features'])} features x "
          f"{len(table['sigmas'])} sigmas -> {args.out}")
    return 0


def cmd_ablate(args) -> int:
    m = features.read_csv(args.features)
    scaled = features.minmax_fit_transform(m)
    rows = experiments.ablation_study(scaled, m.labels, args.learner,
                                      json.loads(args.params), seed=args.seed)
    _write_table_csv(args.out,
                     ["config", "n_features", "accuracy", "f1", "roc_auc"],
                     [[r["config"], r["n_features"], r["means"]["accuracy"],
                       r["means"]["f1"], r["means"]["roc_auc"]] for r in rows])
    print(f"ablate: {len(rows)} configurations -> {args.out}")
    return 0


def _write_exp1_tables(report, out_dir: Path) -> None:
    curve = report.payload["learning_curve"]
    _write_table_csv(out_dir / "curve.csv",
                     ["fraction", "train_mean", "train_std", "val_mean", "val_std"],
                     [[r["fraction"], r["train_mean"], r["train_std"],
                       r["val_mean"], r["val_std"]] for r in curve])
    pt = report.payload["perturbation"]
    header = ["feature"] + [f"sigma_{s:g}" for s in pt["sigmas"]]
    _write_table_csv(out_dir / "perturbation.csv", header,
                     [[n] + row for n, row in
                      zip(pt["features"], pt["accuracy"])])
    ab = report.payload["ablation"]
    _write_table_csv(out_dir / "ablation.csv",
                     ["config", "n_features", "accuracy", "f1", "roc_auc"],
                     [[r["config"], r["n_features"], r["means"]["accuracy"],
                       r["means"]["f1"], r["means"]["roc_auc"]] for r in ab])


_EXP1_GRIDS = {
    "boosting": {"n_rounds": [60], "max_depth": [2, 3]},
    "forest": {"n_trees": [30], "max_depth": [8, 12]},
    "tree": {"max_depth": [4, 8]},
    "logistic": {"epochs": [300], "step": [0.25, 0.5]},
}


def cmd_exp1(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = experiments.run_experiment_1(
        args.corpus,
        {"k": args.k, "learner": args.learner,
         "grid": _EXP1_GRIDS[args.learner]},
        seed=args.seed)
    (out_dir / "report.json").write_text(report.to_json())
    _write_exp1_tables(report, out_dir)
    tm = report.payload["test_metrics"]
    print(f"exp1: test accuracy {tm['accuracy']:.4f} f1 {tm['f1']:.4f} "
          f"auc {tm['roc_auc']:.4f} -> {out_dir}")
    return 0


def cmd_exp2(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = experiments.run_experiment_2(args.corpus, {"k": args.k},
                                          seed=args.seed)
    (out_dir / "report.json").write_text(report.to_json())
    tm = report.payload["test_metrics"]
    print(f"exp2: F1-macro {tm['f1_macro']:.4f} F1-micro {tm['f1_micro']:.4f} "
          f"-> {out_dir}")
    return 0


_COMMANDS = {
    "gen": cmd_gen, "parse": cmd_parse, "features": cmd_features,
    "select": cmd_select, "train": cmd_train, "eval": cmd_eval,
    "curve": cmd_curve, "perturb": cmd_perturb, "ablate": cmd_ablate,
    "exp1": cmd_exp1, "exp2": cmd_exp2,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.cmd](args)
    except (FtraceKitError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
