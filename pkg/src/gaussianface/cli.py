"""Command-line entry point: ``python -m gaussianface <command> ...``.

Exit codes: 0 success, 1 usage/config/input error, 2 numerical failure,
3 self-check failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .checks import gradient_suite, selfcheck
from .cluster import build_codebook, cluster
from .config import Config, ConfigError, load_config
from .evaluation import (
    decisions,
    kfold_eval,
    roc_curve,
    select_hyperparameters,
    validation_split,
    write_roc_csv,
)
from .exceptions import ContractViolation, NumericalFailure, OptimizationFailure
from .io import fe_from_dict, fe_to_dict, read_pairs, write_pairs
from .model import model_from_dict, model_to_dict
from .pipelines import (
    bc_probabilities,
    combined_probabilities,
    extract_features,
    train_bc,
    train_combined,
    train_fe,
)
from .synth import gen_domains

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_CHECK = 0, 1, 2, 3

log = logging.getLogger("gaussianface")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _config(args) -> Config:
    cfg = load_config(args.config) if getattr(args, "config", None) else Config()
    if getattr(args, "sources", None) is not None:
        cfg = replace(cfg, eval=replace(cfg.eval, sources=args.sources))
    return cfg


def _load_data(directory, S):
    d = Path(directory)
    target_file = d / "target.pairs"
    if not target_file.exists():
        raise ContractViolation(f"{d}: no target.pairs")
    target = read_pairs(target_file, "target")
    sources = []
    for i in range(1, S + 1):
        f = d / f"source{i}.pairs"
        if not f.exists():
            raise ContractViolation(f"{d}: {S} sources requested but {f.name} is missing")
        sources.append(read_pairs(f, f"source{i}"))
    return target, sources


def _load_doc(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ContractViolation(f"{path}:{exc.lineno}: malformed JSON: {exc.msg}") from None


def _predict(doc, pairs):
    pipe = doc.get("pipeline", {"mode": "bc", "similarity": "cosine"})
    bc = model_from_dict(doc)
    if pipe["mode"] == "combined":
        return combined_probabilities(pairs, fe_from_dict(doc["fe"]), bc)
    return bc_probabilities(pairs, bc, pipe["similarity"])


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args):
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    target, sources = gen_domains(cfg.data, cfg.eval.sources)
    write_pairs(target, out / "target.pairs")
    for i, s in enumerate(sources, 1):
        write_pairs(s, out / f"source{i}.pairs")
    print(f"wrote {1 + len(sources)} domain file(s) to {out}")
    return EXIT_OK


def cmd_train(args):
    cfg = _config(args)
    target, sources = _load_data(args.data, cfg.eval.sources)
    tr, val = validation_split(target, cfg.eval.validation_fraction, cfg.seed)
    train_set = target.subset(tr)
    pc = cfg.pipeline
    if pc.mode == "combined":
        fe = train_fe(train_set, sources if pc.fe_sources else (), cfg.model, cfg.cluster, pc.fe_max_points, cfg.seed)
        fe.prob_clamp = pc.prob_clamp
        bc = train_combined(train_set, fe, cfg.model, sources)
        doc = model_to_dict(bc)
        doc["fe"] = fe_to_dict(fe)
    else:
        bc = train_bc(train_set, sources, cfg.model, pc.similarity)
        doc = model_to_dict(bc)
    doc["pipeline"] = {"mode": pc.mode, "similarity": pc.similarity, "threshold": pc.threshold}
    p = _predict(doc, target.subset(val))
    acc = float(np.mean(decisions(p, pc.threshold) == target.labels[val]))
    doc["validation"] = {"indices": val.tolist(), "accuracy": acc, "config_hash": cfg.digest()}
    with open(args.out, "w") as fh:
        json.dump(doc, fh)
    print(f"validation_accuracy: {acc!r}")
    return EXIT_OK


def cmd_eval(args):
    cfg = _config(args)
    target, sources = _load_data(args.data, cfg.eval.sources)
    if args.model:
        doc = _load_doc(args.model)
        idx = np.arange(target.n) if args.all else np.asarray(doc["validation"]["indices"])
        thr = doc.get("pipeline", {}).get("threshold", 0.5)
        p = _predict(doc, target.subset(idx))
        acc = float(np.mean(decisions(p, thr) == target.labels[idx]))
        print(f"accuracy: {acc!r}")
        if args.roc:
            write_roc_csv(roc_curve(p, target.labels[idx])[0], args.roc)
        return EXIT_OK
    table = None
    if args.select or cfg.eval.select:
        cfg, table = select_hyperparameters(cfg, (target, sources))
    report = kfold_eval(cfg, (target, sources))
    if table is not None:
        report.extra["selected_beta"] = cfg.model.beta
        report.extra["selected_sigma"] = cfg.model.prior.sigma
        report.extra["selected_n_anchors"] = cfg.model.n_anchors
    text = report.to_text()
    if args.report:
        Path(args.report).write_text(text)
    print(text, end="")
    if args.roc:
        write_roc_csv(report.roc, args.roc)
    return EXIT_OK


def cmd_extract(args):
    doc = _load_doc(args.model)
    fe_doc = doc.get("fe", doc)
    fe = fe_from_dict(fe_doc)
    pairs = read_pairs(args.pairs)
    feats = extract_features(pairs, fe)
    np.savetxt(args.out, feats, delimiter=",", fmt="%.17g")
    print(f"wrote {feats.shape[0]} x {feats.shape[1]} features to {args.out}")
    return EXIT_OK


def cmd_cluster(args):
    doc = _load_doc(args.model)
    model = model_from_dict(doc["fe"]["model"] if "fe" in doc else doc)
    cfg = load_config(args.config).cluster if args.config else None
    Z = model.target.Z
    res = cluster(Z, model.classifier, cfg)
    book = build_codebook(Z, res.labels, model.classifier)
    out = {"labels": res.labels.tolist(), "threshold": res.threshold, "codebook": book.to_dict()}
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(out, fh)
    print(f"clusters: {book.size}")
    return EXIT_OK


def _report_checks(results):
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


def cmd_gradcheck(args):
    seed = args.seed if args.seed is not None else _config(args).seed
    return _report_checks([gradient_suite(args.instances, seed)])


def cmd_selfcheck(args):
    return _report_checks(selfcheck())


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gaussianface", description="Multi-task discriminative GPLVM face verification.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write synthetic pair-feature files")
    s.add_argument("--config")
    s.add_argument("--sources", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train on a data directory, write a model document")
    s.add_argument("--config")
    s.add_argument("--data", required=True)
    s.add_argument("--sources", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="k-fold evaluation, or scoring of a saved model")
    s.add_argument("--config")
    s.add_argument("--data", required=True)
    s.add_argument("--sources", type=int)
    s.add_argument("--model")
    s.add_argument("--all", action="store_true", help="with --model: score every target pair")
    s.add_argument("--select", action="store_true", help="choose beta, sigma and anchors on a validation split")
    s.add_argument("--report")
    s.add_argument("--roc")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("extract", help="FE descriptors for a pair file")
    s.add_argument("--model", required=True)
    s.add_argument("--pairs", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("cluster", help="cluster the training latents of a model")
    s.add_argument("--model", required=True)
    s.add_argument("--config")
    s.add_argument("--out")
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    s.add_argument("--config")
    s.add_argument("--instances", type=int, default=20)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("selfcheck", help="Woodbury, KFDA, clustering and gradient oracles")
    s.set_defaults(func=cmd_selfcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore")
    try:
        return args.func(args)
    except (ConfigError, ContractViolation, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, OptimizationFailure, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
