"""Command-line entry point: ``precursor <command> ...``.

Exit codes: 0 success, 1 finished with warnings, 2 configuration or
validation failure.
"""
import argparse
import csv
import json
import os
import sys
from collections import Counter

import numpy as np

from . import __version__
from .container import (ContainerError, blob_fingerprint, decode_model, dump_json, encode_model,
                        load_model, save_model)
from .dataset import (UNIVERSE, DataError, SplitSpec, case_from_json, class_weights, design_matrix,
                      dumps_case, expand_multilabel, load_schemas, read_cases, split_dataset,
                      write_cases)
from .extract import LexiconError, extract_attributes, load_lexicon
from .forest import permutation_importance
from .gbm import ConfigurationError as GbmConfigError
from .gbm import gbm_gain_importance
from .metrics import random_baseline, score_predictions
from .report import FAMILY_LABEL, barplot_svg, contributions_csv, metrics_table
from .stack import predict_stack_models, train_stack
from .svm import class_attribute_contributions
from .synth import ConfigurationError as SynthConfigError
from .synth import GeneratorSpec, default_spec, generate_corpus, load_spec
from .tuning import (default_grid, fit_family, grid_csv_rows, grid_search, make_params)

OK, PARTIAL, CONFIG_ERROR = 0, 1, 2


class UsageError(Exception):
    pass


CONFIG_ERRORS = (UsageError, DataError, LexiconError, ContainerError, GbmConfigError,
                 SynthConfigError, FileNotFoundError, json.JSONDecodeError)


def _warn(msg):
    print(f"warning: {msg}", file=sys.stderr)


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


def _schema(args):
    schemas = load_schemas(getattr(args, "schemas", None))
    if args.outcome not in schemas:
        raise UsageError(f"unknown outcome {args.outcome!r}")
    return schemas[args.outcome]


def _labelled(path, schema, require=False):
    """Read, expand multi-label cases for the outcome, and build X, y."""
    cases = read_cases(path)
    expanded, dropped = expand_multilabel(cases, schema.name)
    if dropped and require:
        raise UsageError(f"{path}: {dropped} case(s) lack a {schema.name!r} label")
    if dropped:
        _warn(f"{path}: skipped {dropped} case(s) without a {schema.name!r} label")
    if not expanded:
        raise UsageError(f"{path}: no cases labelled for {schema.name!r}")
    X, y = design_matrix(expanded, schema)
    return expanded, X, y


def _write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def _params_from(args):
    return _read_json(args.params) if args.params else {}


# --------------------------------------------------------------------------
# commands

def cmd_extract(args):
    lexicon = load_lexicon(args.lexicon)
    hits = Counter()
    n_ok = n_bad = 0
    out_lines = []
    with open(args.input, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                case = case_from_json(json.loads(line))
            except (json.JSONDecodeError, DataError, TypeError, AttributeError) as exc:
                _warn(f"{args.input}:{lineno}: skipped ({exc})")
                n_bad += 1
                continue
            if case.narrative:
                case = case.with_attributes(extract_attributes(case.narrative, lexicon))
            for name in UNIVERSE.names_of(case.attributes):
                hits[name] += 1
            out_lines.append(dumps_case(case))
            n_ok += 1
    with open(args.output, "w", encoding="utf-8") as fh:
        for line in out_lines:
            fh.write(line + "\n")
    print(f"cases: {n_ok} extracted, {n_bad} skipped")
    for name in UNIVERSE.names:
        if hits[name]:
            print(f"{name}\t{hits[name]}")
    if n_bad and not n_ok:
        return CONFIG_ERROR
    return OK


def cmd_synth(args):
    if args.spec:
        spec = load_spec(args.spec)
        if args.seed is not None or args.n is not None:
            obj = spec.to_json()
            obj["seed"] = spec.seed if args.seed is None else args.seed
            obj["n_cases"] = spec.n_cases if args.n is None else args.n
            spec = GeneratorSpec.from_json(obj)
    else:
        spec = default_spec(5000 if args.n is None else args.n, 0 if args.seed is None else args.seed)
    cases = generate_corpus(spec, threads=args.threads)
    write_cases(args.output, cases)
    if args.spec_out:
        with open(args.spec_out, "w") as fh:
            json.dump(spec.to_json(), fh, indent=1, sort_keys=True)
            fh.write("\n")
    print(f"wrote {len(cases)} cases (seed {spec.seed})")
    return OK


def cmd_split(args):
    cases = read_cases(args.input)
    spec = SplitSpec(args.test_fraction, args.val_fraction, args.seed)
    train, val, test = split_dataset(cases, spec, stratify_by=args.stratify)
    os.makedirs(args.out_dir, exist_ok=True)
    for name, part in (("train", train), ("val", val), ("test", test)):
        write_cases(os.path.join(args.out_dir, f"{name}.jsonl"), part)
    print(f"train {len(train)}  val {len(val)}  test {len(test)}  (seed {args.seed})")
    return OK


def _class_weight_array(args, train_cases, schema):
    if args.no_class_weights:
        return None
    return class_weights(train_cases, schema).as_array(schema)


def cmd_train(args):
    schema = _schema(args)
    tr_cases, X, y = _labelled(args.train, schema)
    val = None
    if args.val:
        _, Xv, yv = _labelled(args.val, schema)
        val = (Xv, yv)
    cw = _class_weight_array(args, tr_cases, schema)
    cfg = _params_from(args)
    family = args.family
    if family == "gbm" and val is None and "n_rounds" not in cfg:
        raise UsageError("gbm needs --val for early stopping (or n_rounds in --params)")
    status = OK
    if args.final:
        if val is None:
            raise UsageError("--final needs --val")
        if family == "gbm" and "n_rounds" not in cfg:
            probe = fit_family("gbm", make_params("gbm", cfg, args.seed, cw), X, y, *val,
                               n_classes=schema.K, threads=args.threads)
            cfg["n_rounds"] = probe.best_round
            print(f"early stopping picked {probe.best_round} rounds; refitting on train + val")
        X = np.concatenate([X, val[0]])
        y = np.concatenate([y, val[1]])
        val = None
    params = make_params(family, cfg, args.seed, cw)
    Xv, yv = val if val is not None else (None, None)
    model = fit_family(family, params, X, y, Xv, yv, n_classes=schema.K, threads=args.threads)
    counts = np.bincount(y, minlength=schema.K).tolist()
    blob = encode_model(family, model, schema, args.seed, info={"train_counts": counts})
    save_model(args.model_out, blob)
    print(f"{family} model for {schema.name} written to {args.model_out}")
    if family == "gbm":
        log = args.log_csv or args.model_out + ".log.csv"
        _write_csv(log, [["round", "train_loss", "val_loss"]] +
                   [[r, f"{a:.10g}", f"{b:.10g}"] for r, a, b in model.history])
        print(f"best_round {model.best_round} of {len(model.rounds)}; loss curve: {log}")
    if family == "svm" and model.warning:
        _warn("svm solver reached max_iter before converging for some classes")
        status = PARTIAL
    if args.dump_json:
        with open(args.dump_json, "w") as fh:
            fh.write(dump_json(blob) + "\n")
    return status


def cmd_stack(args):
    schema = _schema(args)
    tr_cases, X, y = _labelled(args.train, schema)
    _, Xv, yv = _labelled(args.val, schema)
    cw = _class_weight_array(args, tr_cases, schema)
    fp = make_params("forest", _read_json(args.forest_params) if args.forest_params else {}, args.seed, cw)
    gp = make_params("gbm", _read_json(args.gbm_params) if args.gbm_params else {}, args.seed, cw)
    sp = None
    if args.experimental_svm_votes:
        sp = make_params("svm", _read_json(args.svm_params) if args.svm_params else {}, args.seed, cw)
    stack, forest, gbm, svm = train_stack(X, y, Xv, yv, fp, gp, schema.K, sp, threads=args.threads)
    counts = np.bincount(y, minlength=schema.K).tolist()
    info = {"train_counts": counts}
    fblob = encode_model("forest", forest, schema, args.seed, info=info)
    gblob = encode_model("gbm", gbm, schema, args.seed, info=info)
    sblob = encode_model("svm", svm, schema, args.seed, info=info) if svm is not None else None
    stack.base_fingerprints = (blob_fingerprint(fblob), blob_fingerprint(gblob))
    blob = encode_model("stack", stack, schema, args.seed, extra={"forest": fblob, "gbm": gblob, "svm": sblob},
                        info=info)
    save_model(args.model_out, blob)
    print(f"stack for {schema.name} written to {args.model_out} (meta Newton steps: {stack.iterations})")
    return OK


def _model_label(header, path, used):
    label = FAMILY_LABEL.get(header["family"], header["family"])
    if label in used:
        label = f"{label}:{os.path.basename(path)}"
    used.add(label)
    return label


def _predict(model, header, X):
    if header["family"] == "stack":
        return predict_stack_models(model, model.bases["forest"], model.bases["gbm"], X,
                                    model.bases.get("svm"))[1]
    return model.predict(X)


def cmd_evaluate(args):
    paths = [p for p in args.models.split(",") if p]
    if not paths:
        raise UsageError("no models given")
    loaded = [(p, *load_model(p)) for p in paths]
    schemas = {json.dumps(h["schema"], sort_keys=True) for _, _, h in loaded}
    if len(schemas) != 1:
        raise UsageError("models were trained for different outcome schemas")
    schema = loaded[0][2]["schema_obj"]
    _, X, y = _labelled(args.test, schema, require=True)
    results = []
    used = set()
    counts = None
    for path, model, header in loaded:
        pred = _predict(model, header, X)
        results.append((_model_label(header, path, used), score_predictions(y, pred, schema.K)))
        counts = counts or header.get("info", {}).get("train_counts")
    if args.train:
        _, _, ytr = _labelled(args.train, schema)
        counts = np.bincount(ytr, minlength=schema.K).tolist()
    if counts is None or min(counts) <= 0:
        raise UsageError("random baseline needs positive training counts for every category")
    results.append(("Random", random_baseline(counts, y, seed=args.seed, trials=args.trials)))
    header_lines = [f"outcome: {schema.name}", f"test cases: {len(y)}", f"seed: {args.seed}",
                    f"random baseline trials: {args.trials}",
                    "models: " + ", ".join(os.path.basename(p) for p in paths)]
    csv_text, txt = metrics_table(schema.name, schema.categories, results, header_lines)
    os.makedirs(args.report_dir, exist_ok=True)
    base = os.path.join(args.report_dir, f"{schema.name}")
    with open(base + ".csv", "w") as fh:
        fh.write(csv_text)
    with open(base + ".txt", "w") as fh:
        fh.write(txt)
    print(txt, end="")
    return OK


def cmd_tune(args):
    schema = _schema(args)
    tr_cases, X, y = _labelled(args.train, schema)
    _, Xv, yv = _labelled(args.val, schema)
    cw = _class_weight_array(args, tr_cases, schema)
    grid = default_grid(args.family) if args.grid == "default" else _read_json(args.grid)
    if args.limit:
        grid = grid[:args.limit]
    result = grid_search(args.family, grid, X, y, Xv, yv, schema.K, seed=args.seed,
                         class_weights=cw, threads=args.threads)
    _write_csv(args.out, grid_csv_rows(result))
    if result.best is None:
        _warn("every configuration failed")
        return CONFIG_ERROR
    print(f"{len(result.rows)} configurations; best #{result.best.index}: "
          f"{json.dumps(result.best.config, sort_keys=True)} val macro-F1 {result.best.val_macro_f1:.4f}")
    if args.best_params_out:
        cfg = dict(result.best.config)
        with open(args.best_params_out, "w") as fh:
            json.dump(cfg, fh, sort_keys=True)
            fh.write("\n")
    if result.failed:
        _warn(f"{len(result.failed)} configuration(s) failed")
        return PARTIAL
    return OK


def _importance_rows(scores, names, top, category):
    order_top = np.argsort(-scores, kind="stable")[:top]
    order_bot = np.argsort(scores, kind="stable")[:top]
    rows = [(category, names[j], float(scores[j]), f"top{r}") for r, j in enumerate(order_top, 1)]
    rows += [(category, names[j], float(scores[j]), f"bottom{r}") for r, j in enumerate(order_bot, 1)]
    return rows


def cmd_importance(args):
    model, header = load_model(args.model)
    schema = header["schema_obj"]
    names = list(UNIVERSE.names)
    fam = header["family"]
    rows = []
    if fam == "svm":
        for k, cat in enumerate(schema.categories):
            c = class_attribute_contributions(model, k, args.top, names)
            rows += [(cat, a, v, f"top{r}") for r, (a, v) in enumerate(c["top_k"], 1)]
            rows += [(cat, a, v, f"bottom{r}") for r, (a, v) in enumerate(c["bottom_k"], 1)]
    elif fam == "forest":
        if not args.train:
            raise UsageError("forest permutation importance needs --train (the model's training cases)")
        _, X, y = _labelled(args.train, schema)
        imp = permutation_importance(model, X, y, seed=args.seed, threads=args.threads)
        rows = _importance_rows(imp.normalized, names, args.top, "all")
    elif fam == "gbm":
        if model.n_outputs == 1:
            rows = _importance_rows(gbm_gain_importance(model, len(names)).normalized, names, args.top, "all")
        for k, cat in enumerate(schema.categories if model.n_outputs > 1 else ()):
            imp = gbm_gain_importance(model, len(names), category=k)
            rows += _importance_rows(imp.normalized, names, args.top, cat)
    else:
        raise UsageError("importance is defined for forest, gbm and svm models")
    os.makedirs(args.out_dir, exist_ok=True)
    stem = os.path.join(args.out_dir, f"{schema.name}_{fam}_importance")
    with open(stem + ".csv", "w") as fh:
        fh.write(contributions_csv(rows))
    for cat in dict.fromkeys(r[0] for r in rows):
        sub = [r for r in rows if r[0] == cat]
        # bars ordered top-down from most to least indicative
        sub = [r for r in sub if r[3].startswith("top")] + [r for r in sub if r[3].startswith("bottom")][::-1]
        svg = barplot_svg(f"{schema.name}: {cat}", [r[1] for r in sub], [r[2] for r in sub])
        safe = "".join(ch if ch.isalnum() else "_" for ch in cat)
        with open(f"{stem}_{safe}.svg", "w") as fh:
            fh.write(svg)
    print(f"wrote {len(rows)} rows to {stem}.csv")
    return OK


def cmd_dump(args):
    with open(args.model, "rb") as fh:
        blob = fh.read()
    decode_model(blob)  # validates before printing
    text = dump_json(blob) + "\n"
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return OK


# --------------------------------------------------------------------------
# parser

def build_parser():
    p = argparse.ArgumentParser(prog="precursor", description="Attribute extraction and outcome models for incident reports.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $PRECURSOR_THREADS or 1)")
    sub = p.add_subparsers(dest="command", required=True)
    # --threads is accepted before or after the command name
    threads = argparse.ArgumentParser(add_help=False)
    threads.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    _add = sub.add_parser
    sub.add_parser = lambda *a, **k: _add(*a, parents=[threads], **k)  # noqa: E731

    s = sub.add_parser("extract", help="fill attribute vectors from narratives")
    s.add_argument("--input", required=True)
    s.add_argument("--lexicon", default=None, help="lexicon JSON (default: shipped starter lexicon)")
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    s.add_argument("--spec", default=None, help="generator spec JSON (default: built-in benchmark)")
    s.add_argument("--n", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--output", required=True)
    s.add_argument("--spec-out", default=None)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("split", help="train / validation / test split")
    s.add_argument("--input", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--test-fraction", type=float, default=0.10)
    s.add_argument("--val-fraction", type=float, default=0.10)
    s.add_argument("--stratify", default=None, metavar="OUTCOME")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_split)

    def common_model(s):
        s.add_argument("--outcome", required=True)
        s.add_argument("--schemas", default=None)
        s.add_argument("--train", required=True)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--no-class-weights", action="store_true")

    s = sub.add_parser("train", help="fit one model family")
    common_model(s)
    s.add_argument("--family", required=True, choices=("forest", "gbm", "svm"))
    s.add_argument("--val", default=None)
    s.add_argument("--params", default=None, help="JSON object of hyperparameters")
    s.add_argument("--final", action="store_true", help="refit on train + val")
    s.add_argument("--model-out", required=True)
    s.add_argument("--log-csv", default=None)
    s.add_argument("--dump-json", default=None, metavar="PATH")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("stack", help="fit forest + gbm and a logistic meta-model")
    common_model(s)
    s.add_argument("--val", required=True)
    s.add_argument("--forest-params", default=None)
    s.add_argument("--gbm-params", default=None)
    s.add_argument("--experimental-svm-votes", action="store_true")
    s.add_argument("--svm-params", default=None)
    s.add_argument("--model-out", required=True)
    s.set_defaults(func=cmd_stack)

    s = sub.add_parser("evaluate", help="score models on a test file")
    s.add_argument("--models", required=True, help="comma-separated model files")
    s.add_argument("--test", required=True)
    s.add_argument("--train", default=None, help="training cases for the random baseline")
    s.add_argument("--report-dir", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--trials", type=int, default=1000)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("tune", help="validation grid search")
    common_model(s)
    s.add_argument("--family", required=True, choices=("forest", "gbm", "svm"))
    s.add_argument("--val", required=True)
    s.add_argument("--grid", default="default", help="'default' or a JSON list of configurations")
    s.add_argument("--limit", type=int, default=None, help="only the first N configurations")
    s.add_argument("--out", required=True)
    s.add_argument("--best-params-out", default=None)
    s.set_defaults(func=cmd_tune)

    s = sub.add_parser("importance", help="attribute importance tables and bar charts")
    s.add_argument("--model", required=True)
    s.add_argument("--train", default=None)
    s.add_argument("--top", type=int, default=6)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_importance)

    s = sub.add_parser("dump", help="print a model container as JSON")
    s.add_argument("--model", required=True)
    s.add_argument("--output", default=None)
    s.set_defaults(func=cmd_dump)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    except (ValueError, KeyError, TypeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
