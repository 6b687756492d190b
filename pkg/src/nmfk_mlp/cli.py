"""Command-line interface: generate, scan, train, predict, evaluate.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import shutil
import sys
from pathlib import Path

from . import mlp
from .errors import DataError, NmfkError
from .nmf import NmfConfig
from .nmfk import ScanConfig, dumps_scan, read_scan_jsonl, scan, write_scan_jsonl
from .numerics import read_matrix_csv
from .pipeline import (AIC_ARGMIN, MLP_VOTE, SILHOUETTE_THRESHOLD, confusion_rows, dumps_report,
                       evaluation_rows, predict_with_method, summarize, write_csv)
from .synth import (CORRELATION_BANDS, NOISE_LEVELS, corpus_specs, generate, load_corpus_matrix,
                    load_manifest, save_corpus)
from .windows import build_training_set, split_by_group, write_training_csv

log = logging.getLogger("nmfk_mlp")

EXIT_OK, EXIT_USAGE = 0, 1
METHOD_NAMES = {"mlp": MLP_VOTE, "aic": AIC_ARGMIN, "silhouette": SILHOUETTE_THRESHOLD}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _index_range(text):
    """``START:STOP`` slice of corpus indices, either end optional."""
    try:
        lo, hi = text.split(":")
        return (int(lo) if lo else None, int(hi) if hi else None)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected START:STOP, got {text!r}") from None


def _add_globals(p, suppress):
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=default(0), help="master random seed (default 0)")
    p.add_argument("--threads", type=int, default=default(1), help="worker processes for the scan stage")
    p.add_argument("-v", "--verbose", action="count", default=default(0), help="more logging; repeat for debug")


def _add_scan_flags(p):
    g = p.add_argument_group("scan")
    g.add_argument("--k-min", type=int, default=1)
    g.add_argument("--k-max", type=int, default=16)
    g.add_argument("--ensemble", type=int, default=32, help="ensemble size r")
    g.add_argument("--resample-noise", type=float, default=0.03)
    g.add_argument("--max-iter", type=int, default=1000, help="NMF iteration budget")
    g.add_argument("--tol", type=float, default=1e-6, help="NMF relative objective tolerance")
    g.add_argument("--solver", choices=("mu", "hals"), default="mu")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nmfk-mlp", description="Estimate the number of latent features of a nonnegative matrix.")
    _add_globals(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _add_globals(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("generate", parents=[common], help="write a synthetic labeled corpus")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=12)
    p.add_argument("--n-min", type=int, default=50, help="smallest row/column count")
    p.add_argument("--n-max", type=int, default=150, help="largest row/column count")
    p.add_argument("--noise", type=float, nargs="+", default=list(NOISE_LEVELS), help="noise levels to draw from")
    p.add_argument("--out", type=Path, required=True, help="corpus directory")

    p = sub.add_parser("scan", parents=[common], help="NMFk statistics per K as JSON lines")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", type=Path, help="matrix CSV")
    src.add_argument("--corpus", type=Path, help="corpus directory with manifest.json")
    p.add_argument("--out", type=Path, help="output file (--input, default stdout) or directory (--corpus)")
    p.add_argument("--range", type=_index_range, default=(None, None), help="corpus index slice START:STOP")
    p.add_argument("--resume", action="store_true", help="skip corpus matrices whose scan file exists")
    _add_scan_flags(p)

    p = sub.add_parser("train", parents=[common], help="train the window classifier")
    p.add_argument("--scans", type=Path, action="append", required=True,
                   help="scan directory with manifest.json; may be repeated")
    p.add_argument("--range", type=_index_range, default=(None, None),
                   help="manifest index slice used for training, applied to every scan directory")
    p.add_argument("--out", type=Path, required=True, help="model JSON path")
    p.add_argument("--holdout", type=float, default=0.1, help="validation fraction of matrices")
    p.add_argument("--max-epochs", type=int, default=500)
    p.add_argument("--batch-size", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--l2", type=float, default=mlp.TrainConfig.l2_lambda)
    p.add_argument("--training-csv", type=Path, help="also write the labeled window table")

    p = sub.add_parser("predict", parents=[common], help="predict K for one matrix")
    p.add_argument("--input", type=Path, help="matrix CSV")
    p.add_argument("--scan-file", type=Path, help="reuse a scan JSON-lines file instead of scanning")
    p.add_argument("--model", type=Path, help="model JSON (needed for --method mlp)")
    p.add_argument("--method", choices=tuple(METHOD_NAMES), default="mlp")
    p.add_argument("--hit-weight", type=int, default=5)
    p.add_argument("--threshold", type=float, default=0.75, help="silhouette threshold baseline cut")
    p.add_argument("--out", type=Path, help="report JSON path (default stdout)")
    _add_scan_flags(p)

    p = sub.add_parser("evaluate", parents=[common], help="compare methods on a labeled corpus")
    p.add_argument("--corpus", type=Path, required=True, help="corpus directory with manifest.json")
    p.add_argument("--scans", type=Path, help="directory of cached scan files; scans missing ones")
    p.add_argument("--range", type=_index_range, default=(None, None), help="manifest index slice START:STOP")
    p.add_argument("--model", type=Path)
    p.add_argument("--methods", nargs="+", choices=tuple(METHOD_NAMES), default=["mlp", "aic", "silhouette"])
    p.add_argument("--hit-weight", type=int, default=5)
    p.add_argument("--threshold", type=float, default=0.75)
    p.add_argument("--out", type=Path, required=True, help="accuracy table CSV")
    p.add_argument("--confusion", type=Path, help="confusion CSV (default: <out>_confusion.csv)")
    _add_scan_flags(p)
    return parser


def _scan_config(args) -> ScanConfig:
    if args.k_min > args.k_max:
        raise UsageError(f"--k-min {args.k_min} exceeds --k-max {args.k_max}")
    if args.k_min < 1:
        raise UsageError("--k-min must be >= 1")
    if args.ensemble < 2:
        raise UsageError("--ensemble must be >= 2")
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    nmf_cfg = NmfConfig(max_iterations=args.max_iter, convergence_tol=args.tol, seed=args.seed, solver=args.solver)
    return ScanConfig(k_min=args.k_min, k_max=args.k_max, ensemble_size=args.ensemble,
                      resample_noise=args.resample_noise, nmf=nmf_cfg, seed=args.seed, threads=args.threads)


def _select(entries, index_range):
    lo, hi = index_range
    return entries[slice(lo, hi)]


def _progress(rec):
    log.info("K=%d aic=%.6g min_sil=%.4f avg_sil=%.4f", rec.k, rec.aic, rec.min_silhouette, rec.avg_silhouette)


def scan_file_name(entry) -> str:
    return Path(entry["file"]).stem + ".jsonl"


def cmd_generate(args) -> int:
    if args.count < 0:
        raise UsageError("--count must be >= 0")
    if not 2 <= args.k_min <= args.k_max:
        raise UsageError("need 2 <= --k-min <= --k-max")
    if not 10 <= args.n_min <= args.n_max:
        raise UsageError("need 10 <= --n-min <= --n-max")
    if args.k_max > args.n_min:
        raise UsageError(f"--k-max {args.k_max} exceeds the smallest matrix dimension {args.n_min}")
    specs = corpus_specs(args.count, (args.n_min, args.n_max), (args.k_min, args.k_max), args.seed,
                         noise_levels=tuple(args.noise), bands=CORRELATION_BANDS)
    corpus = []
    for i, spec in enumerate(specs):
        corpus.append(generate(spec))
        log.info("matrix %d: %dx%d k_true=%d", i, spec.n, spec.m, spec.k_true)
    manifest = save_corpus(corpus, args.out)
    print(f"wrote {len(corpus)} matrices and {manifest}")
    return EXIT_OK


def cmd_scan(args) -> int:
    cfg = _scan_config(args)
    if args.input is not None:
        records = scan(read_matrix_csv(args.input), cfg, progress=_progress)
        if args.out is None:
            sys.stdout.write(dumps_scan(records))
        else:
            write_scan_jsonl(args.out, records)
        return EXIT_OK

    if args.out is None:
        raise UsageError("--corpus needs --out DIRECTORY")
    entries = load_manifest(args.corpus)
    args.out.mkdir(parents=True, exist_ok=True)
    if args.out.resolve() != args.corpus.resolve():
        shutil.copyfile(args.corpus / "manifest.json", args.out / "manifest.json")
    for entry in _select(entries, args.range):
        target = args.out / scan_file_name(entry)
        if args.resume and target.exists():
            continue
        log.info("scanning %s", entry["file"])
        records = scan(load_corpus_matrix(args.corpus, entry), cfg, progress=_progress)
        write_scan_jsonl(target, records)
    return EXIT_OK


def load_labeled_scans(directories, index_range=(None, None)):
    labeled = []
    for directory in directories:
        for entry in _select(load_manifest(directory), index_range):
            path = directory / scan_file_name(entry)
            if not path.exists():
                raise DataError(f"missing scan file {path}")
            labeled.append((read_scan_jsonl(path), int(entry["k_true"])))
    return labeled


def cmd_train(args) -> int:
    if not 0 <= args.holdout < 1:
        raise UsageError("--holdout must lie in [0, 1)")
    if args.max_epochs < 1:
        raise UsageError("--max-epochs must be >= 1")
    labeled = load_labeled_scans(args.scans, args.range)
    ws = build_training_set(labeled)
    if len(ws) == 0:
        raise DataError("no training windows found")
    if args.training_csv is not None:
        write_training_csv(args.training_csv, ws)
    train_set, val_set = split_by_group(ws, args.holdout, args.seed) if args.holdout > 0 else (ws, None)
    cfg = mlp.TrainConfig(batch_size=args.batch_size, lr_initial=args.lr, l2_lambda=args.l2,
                          max_epochs=args.max_epochs, seed=args.seed)
    val_x = val_set.features if val_set is not None else None
    val_y = val_set.labels if val_set is not None else None
    model = mlp.train(train_set.features, train_set.labels, cfg, val_x, val_y)
    mlp.save(model, args.out)
    meta = model.metadata
    print(f"{meta['accuracy_source']} accuracy {meta['best_accuracy']:.4f} "
          f"(epoch {meta['best_epoch']} of {meta['epochs_trained']}, {len(train_set)} training windows)")
    return EXIT_OK


def _load_model_if_needed(path, methods):
    if MLP_VOTE not in methods:
        return None
    if path is None:
        raise UsageError("the mlp method needs --model")
    return mlp.load(path)


def cmd_predict(args) -> int:
    method = METHOD_NAMES[args.method]
    model = _load_model_if_needed(args.model, [method])
    if args.scan_file is not None:
        records = read_scan_jsonl(args.scan_file)
    elif args.input is not None:
        records = scan(read_matrix_csv(args.input), _scan_config(args), progress=_progress)
    else:
        raise UsageError("predict needs --input or --scan-file")
    pred = predict_with_method(records, method, model, args.hit_weight, args.threshold)
    report = dumps_report(pred)
    if args.out is None:
        sys.stdout.write(report)
    else:
        args.out.write_text(report)
        print(f"k_predicted {pred.k_predicted}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    methods = [METHOD_NAMES[m] for m in dict.fromkeys(args.methods)]
    model = _load_model_if_needed(args.model, methods)
    cfg = _scan_config(args)
    entries = _select(load_manifest(args.corpus), args.range)
    if not entries:
        raise DataError("no matrices selected for evaluation")
    if args.scans is not None:
        args.scans.mkdir(parents=True, exist_ok=True)

    preds = {m: [] for m in methods}
    k_true, indices = [], []
    for entry in entries:
        cached = None if args.scans is None else args.scans / scan_file_name(entry)
        if cached is not None and cached.exists():
            records = read_scan_jsonl(cached)
        else:
            records = scan(load_corpus_matrix(args.corpus, entry), cfg, progress=_progress)
            if cached is not None:
                write_scan_jsonl(cached, records)
        for m in methods:
            preds[m].append(predict_with_method(records, m, model, args.hit_weight, args.threshold).k_predicted)
        k_true.append(int(entry["k_true"]))
        indices.append(int(entry["index"]))

    write_csv(args.out, evaluation_rows(indices, k_true, preds))
    confusion = args.confusion or args.out.with_name(args.out.stem + "_confusion.csv")
    write_csv(confusion, confusion_rows(k_true, preds))
    for s in summarize(k_true, preds):
        print(f"{s.method}: exact {s.exact_rate:.3f} within-1 {s.within1_rate:.3f} (n={s.n})")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "scan": cmd_scan,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"nmfk-mlp {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NmfkError as exc:
        print(f"nmfk-mlp {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"nmfk-mlp {args.command}: error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
