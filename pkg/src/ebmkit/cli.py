"""Command-line pipeline: synthesize, train, evaluate, explain.

Every subcommand is reproducible: identical inputs, flags and seed produce
byte-identical outputs (files are written atomically, logs go to stderr,
artifacts contain no timestamps). A JSON config file can supply defaults;
explicit flags win over it.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
import pandas as pd

from .boosting import TrainConfig, fit_ebm
from .errors import ConfigError, EbmKitError, MetricError
from .metrics import (EbmTrainer, EvalReport, ExternalScoreTrainer, LrTrainer,
                      auroc, calibration_curve, cv_evaluate, external_validate,
                      ingest_external_scores, log_loss)
from .model import EbmModel, load_model, save_model
from .preprocess import (ExclusionRule, ExclusionRuleSet, apply_exclusions,
                         impute_mean)
from .reporting import (auroc_table, calibration_svg, export_shape,
                        importance_table, render_shape_svg)
from .schema import CONTINUOUS, Cohort, FeatureSchema, load_csv, save_csv
from .synth import PRESETS, CohortSpec, generate_synthetic, preset


def _write_text(path, text: str) -> None:
    tmp = str(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _train_config(args) -> TrainConfig:
    cfg = TrainConfig(
        outer_bags=args.outer_bags, inner_bags=args.inner_bags,
        min_samples_leaf=args.min_samples_leaf, interactions=args.interactions,
        learning_rate=args.learning_rate, max_leaves_per_update=args.max_leaves,
        max_epochs=args.max_epochs, early_stop_patience=args.patience,
        validation_fraction=args.validation_fraction, seed=args.seed,
        max_bins=args.max_bins, pair_bins=args.pair_bins,
        n_jobs=args.jobs, verbose=args.verbose)
    if args.fast:
        cfg = cfg.fast()
    return cfg


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--outer-bags", type=int, default=25)
    p.add_argument("--inner-bags", type=int, default=25)
    p.add_argument("--min-samples-leaf", type=int, default=25)
    p.add_argument("--interactions", type=int, default=20)
    p.add_argument("--learning-rate", type=float, default=0.01)
    p.add_argument("--max-leaves", type=int, default=3)
    p.add_argument("--max-epochs", type=int, default=5000)
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--validation-fraction", type=float, default=0.15)
    p.add_argument("--max-bins", type=int, default=256)
    p.add_argument("--pair-bins", type=int, default=32)
    p.add_argument("--jobs", type=int, default=None, help="thread count for outer bags")
    p.add_argument("--fast", action="store_true",
                   help="test-speed profile: 3 outer bags, no inner bagging")


def _load_cohort(args) -> Cohort:
    schema = FeatureSchema.load(args.schema)
    return load_csv(args.cohort, schema)


def cmd_synth(args) -> int:
    if args.spec:
        spec = CohortSpec.load(args.spec)
    else:
        spec = preset(args.preset, n_hospitals=args.n_hospitals,
                      hospital_effect_scale=args.hospital_effect_scale)
    cohort = generate_synthetic(spec, args.n, args.seed)
    os.makedirs(args.out, exist_ok=True)
    save_csv(cohort, os.path.join(args.out, "cohort.csv"))
    _write_text(os.path.join(args.out, "schema.json"), spec.schema.to_json())
    _write_text(os.path.join(args.out, "truth_model.json"), spec.truth.to_json())
    logit_lines = ["row_id,logit"]
    logit_lines += [f"{int(i)},{z!r}" for i, z in zip(cohort.row_ids, cohort.true_logit)]
    _write_text(os.path.join(args.out, "true_logits.csv"), "\n".join(logit_lines) + "\n")
    _log(f"[synth] wrote {cohort.n_rows} rows to {args.out}; "
         f"prevalence({spec.outcome})={cohort.prevalence(spec.outcome):.4f}; "
         f"truth intercept={spec.truth.intercept:.4f}")
    return 0


def _exclusion_rules(choice: str, cohort: Cohort) -> ExclusionRuleSet | None:
    if choice == "none":
        return None
    if choice == "default":
        defaults = ExclusionRuleSet.obstetric_defaults()
        usable, skipped = [], []
        for rule in defaults.rules:
            if rule.feature in cohort.schema.names and \
                    cohort.schema.kind_of(rule.feature) == CONTINUOUS:
                usable.append(rule)
            else:
                skipped.append(rule.label)
        if skipped:
            _log(f"[train] default exclusion rules without a matching column skipped: {skipped}")
        return ExclusionRuleSet(usable) if usable else None
    with open(choice, encoding="utf-8") as fh:
        doc = json.load(fh)
    return ExclusionRuleSet([ExclusionRule(r["feature"], r["predicate"], float(r["threshold"]))
                             for r in doc])


def cmd_train(args) -> int:
    cohort = _load_cohort(args)
    if args.outcome not in cohort.schema.label_names:
        raise ConfigError(f"cohort has no outcome column {args.outcome!r} "
                          f"(labels: {cohort.schema.label_names})")
    os.makedirs(args.out, exist_ok=True)
    rules = _exclusion_rules(args.exclusions, cohort)
    if rules is not None:
        cohort, report = apply_exclusions(cohort, rules)
        _write_text(os.path.join(args.out, "exclusion_report.json"),
                    json.dumps(report.to_dict(), indent=2) + "\n")
        _log(f"[train] exclusions dropped {report.n_dropped} of {report.n_in} rows")
    imputed, stats = impute_mean(cohort)
    config = _train_config(args)
    model = fit_ebm(imputed, args.outcome, config)
    model.config["imputation_means"] = dict(stats.means)
    path = os.path.join(args.out, "model.json")
    save_model(model, path)
    _log(f"[train] wrote {path} ({len(model.shapes)} shapes, {len(model.pairs)} pairs)")
    return 0


def _recipes(args):
    out = []
    for name in args.recipe.split(","):
        name = name.strip()
        if name == "ebm":
            out.append(EbmTrainer(_train_config(args)))
        elif name == "lr":
            out.append(LrTrainer(l2=args.l2))
        else:
            raise ConfigError(f"unknown recipe {name!r} (use ebm, lr)")
    for item in args.external_scores or []:
        label, _, path = item.partition("=")
        if not path:
            raise ConfigError("--external-scores needs NAME=PATH")
        out.append(ExternalScoreTrainer(ingest_external_scores(path), name=label))
    return out


def cmd_evaluate(args) -> int:
    cohort = _load_cohort(args)
    os.makedirs(args.out, exist_ok=True)
    reports: list[EvalReport] = []
    if args.model:
        model = load_model(args.model)
        if not isinstance(model, EbmModel):
            raise ConfigError("--model scoring expects an EBM model file")
        from .preprocess import ImputationStats
        means = model.config.get("imputation_means", {})
        scored, _ = impute_mean(cohort, ImputationStats(means)) if means else (cohort, None)
        scores = model.predict_proba_rows(scored)
        y = cohort.labels(model.outcome)
        reports.append(EvalReport(
            model="ebm", outcome=model.outcome, auroc=auroc(scores, y),
            log_loss=log_loss(scores, y),
            calibration=calibration_curve(scores, y, args.calibration_bins),
            n_train=0, n_test=cohort.n_rows, split="scored", seed=args.seed))
    else:
        for trainer in _recipes(args):
            if args.cv:
                reports.append(cv_evaluate(trainer, cohort, args.outcome,
                                           k=args.cv, seed=args.seed))
            else:
                reports.append(external_validate(
                    trainer, cohort, args.outcome, seed=args.seed,
                    target_fraction=args.target_fraction,
                    calibration_bins=args.calibration_bins))
    _write_text(os.path.join(args.out, "eval.json"),
                json.dumps([r.to_dict() for r in reports], indent=2) + "\n")
    table = auroc_table(reports)
    _write_text(os.path.join(args.out, "eval.txt"), table.render_text())
    for r in reports:
        if r.calibration:
            _write_text(os.path.join(args.out, f"calibration_{r.model}.svg"),
                        calibration_svg(r.calibration))
    _log("[evaluate]\n" + table.render_text().rstrip())
    return 0


def _parse_row_file(path, model: EbmModel) -> pd.DataFrame:
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    cols = {}
    means = model.config.get("imputation_means", {})
    for s in model.shapes:
        name = s.name
        if name not in df.columns:
            raise ConfigError(f"row file is missing model feature {name!r}")
        if s.bins.kind == CONTINUOUS:
            vals = np.array([float(v) if str(v).strip() != "" else np.nan for v in df[name]])
            if name in means:
                vals = np.where(np.isnan(vals), means[name], vals)
            cols[name] = vals
        else:
            cols[name] = np.array([str(v).strip() or "Missing" for v in df[name]], dtype=object)
    return pd.DataFrame(cols)


def cmd_explain(args) -> int:
    model = load_model(args.model)
    if not isinstance(model, EbmModel):
        raise ConfigError("explain expects an EBM model file")
    os.makedirs(args.out, exist_ok=True)
    features = args.feature or model.feature_names
    for name in features:
        export = export_shape(model, name)
        _write_text(os.path.join(args.out, f"shape_{name}.json"), export.to_json())
        _write_text(os.path.join(args.out, f"shape_{name}.csv"), export.to_csv())
        _write_text(os.path.join(args.out, f"shape_{name}.svg"), render_shape_svg(export))
    _log(f"[explain] wrote {len(features)} shape exports to {args.out}")
    if args.top is not None:
        if not (args.cohort and args.schema):
            raise ConfigError("--top needs --cohort and --schema as the reference population")
        cohort = _load_cohort(args)
        means = model.config.get("imputation_means", {})
        if means:
            from .preprocess import ImputationStats
            cohort, _ = impute_mean(cohort, ImputationStats(means))
        table = importance_table(model, cohort, args.top)
        _write_text(os.path.join(args.out, "importance.txt"), table.render_text())
        _write_text(os.path.join(args.out, "importance.json"), table.to_json())
        print(table.render_text(), end="")
    if args.row:
        frame = _parse_row_file(args.row, model)
        for i, expl in enumerate(model.explain_rows(frame)):
            print(f"row {i}:")
            print(f"  intercept            {expl.intercept:+.6f}")
            for name, value in expl.sorted_terms():
                print(f"  {name:20s} {value:+.6f}")
            print(f"  total logit          {expl.logit:+.6f}")
            print(f"  probability          {expl.probability:.6f}")
    return 0


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="ebmkit",
        description="Interpretable risk modeling: synthesize cohorts, train "
                    "explainable boosting machines, evaluate, and explain.")
    parser.add_argument("--config", default=None,
                        help="JSON file of flag defaults (explicit flags win; "
                        "required path flags must still be given on the command line)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort with ground truth")
    p.add_argument("--preset", default="smm", choices=sorted(PRESETS))
    p.add_argument("--spec", default=None, help="cohort spec JSON (overrides --preset)")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-hospitals", type=int, default=12)
    p.add_argument("--hospital-effect-scale", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="preprocess and fit an EBM")
    p.add_argument("--cohort", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--outcome", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--exclusions", default="default",
                   help="'default', 'none', or a JSON rule file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="count", default=0)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="external validation, CV, or model scoring")
    p.add_argument("--cohort", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--outcome", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--model", default=None, help="score a trained model file instead of fitting")
    p.add_argument("--recipe", default="ebm", help="comma list of ebm, lr")
    p.add_argument("--split", default="hospital", choices=["hospital"],
                   help="external validation split (default)")
    p.add_argument("--cv", type=int, default=None, help="k-fold CV instead of the hospital split")
    p.add_argument("--target-fraction", type=float, default=0.75)
    p.add_argument("--calibration-bins", type=int, default=10)
    p.add_argument("--external-scores", action="append", metavar="NAME=PATH",
                   help="add a comparison column from a (row_id,score) CSV")
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="count", default=0)
    _add_train_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("explain", help="shape exports, importance table, per-row terms")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--feature", action="append", default=None)
    p.add_argument("--top", type=int, default=None)
    p.add_argument("--cohort", default=None)
    p.add_argument("--schema", default=None)
    p.add_argument("--row", default=None, help="CSV of rows to explain")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.set_defaults(func=cmd_explain)
    return parser, dict(sub.choices)


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser, subparsers = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    try:
        if known.config:
            with open(known.config, encoding="utf-8") as fh:
                doc = json.load(fh)
            if not isinstance(doc, dict):
                raise ConfigError("config file must hold a JSON object of flag defaults")
            defaults = {k.replace("-", "_"): v for k, v in doc.items()}
            for sp in subparsers.values():
                sp.set_defaults(**defaults)
        args = parser.parse_args(argv)
        return args.func(args)
    except json.JSONDecodeError as exc:
        print(f"error: bad config file: {exc}", file=sys.stderr)
        return 1
    except MetricError as exc:
        print(f"metric error: {exc}", file=sys.stderr)
        return 1
    except EbmKitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
