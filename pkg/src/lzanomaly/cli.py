"""Command-line interface: ``lzanomaly {train,score,eval,synth,hist,compare}``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 model/support
incompatibility.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys

import numpy as np

from . import model as lzmodel
from . import preprocess, profile, sources
from .detect import majority_score, roc_curve, subsequence_scores, threshold_for_fpr
from .errors import (
    EmptyTrainingError,
    IncompatibleModelError,
    IncompatibleSupportError,
    InsufficientDataError,
    InvalidSpecError,
    InvalidSymbolError,
    LZAnomalyError,
    TooShortError,
)
from .formats import read_calls, read_category_mapping, read_symbol_rows, write_symbol_rows

log = logging.getLogger("lzanomaly")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INCOMPATIBLE = 0, 2, 3, 4
DEFAULT_LEVELS = 7
DEFAULT_SUBSEQ = 10
CALIBRATION_FRACTION = 0.2
SWEEP_DEFAULT = "1,3,5,7,9"


class UsageError(Exception):
    pass


# -- input handling ----------------------------------------------------------


def _hash_rank(key: str, seed: int) -> bytes:
    return hashlib.sha256(f"{seed}:{key}".encode()).digest()


def split_halves(items, key, seed: int) -> tuple:
    """Deterministic equal split: order by seeded hash of ``key(item)``,
    first half trains, second half tests."""
    ranked = sorted(items, key=lambda it: _hash_rank(key(it), seed))
    cut = (len(ranked) + 1) // 2
    chosen = {id(it) for it in ranked[:cut]}
    train = [it for it in items if id(it) in chosen]
    test = [it for it in items if id(it) not in chosen]
    return train, test


class Item:
    """One sequence to train on or score."""

    __slots__ = ("ident", "label", "values", "symbols")

    def __init__(self, ident, label=None, values=None, symbols=None):
        self.ident = ident
        self.label = label
        self.values = values
        self.symbols = symbols


def _select_split(items, args, part):
    if not args.split:
        return items
    train, test = split_halves(items, lambda it: f"{it.ident}:{it.label}", args.seed)
    return train if part == "train" else test


def _read_items(args, path, part, label=None):
    fmt = args.input_format
    if fmt == "records":
        parsed = preprocess.read_records(path, strict=not args.lenient)
        flows = preprocess.build_flows(parsed.events)
        items = []
        for f in flows:
            try:
                values = preprocess.extract_feature(f, args.feature)
            except TooShortError:
                values = None
            items.append(Item(f.flow_id, f.label.value, values=values))
        return _select_split(items, args, part)
    if fmt == "symbols":
        seqs = read_symbol_rows(path)
        items = [Item(f"row{i}", label, symbols=s) for i, s in enumerate(seqs)]
        return _select_split(items, args, part)
    if fmt == "calls":
        if not args.mapping:
            raise UsageError("--input-format calls requires --mapping")
        mapping, _ = read_category_mapping(args.mapping)
        return [Item(os.path.basename(path), label, symbols=read_calls(path, mapping))]
    raise UsageError(f"unknown input format {fmt!r}")


def _alphabet_for(args):
    if args.input_format == "calls":
        _, cats = read_category_mapping(args.mapping)
        return len(cats)
    return args.levels or DEFAULT_LEVELS


def _quantize_items(items, model):
    q = model.quantizer
    if q is None:
        raise IncompatibleModelError("model carries no quantizer; it was not trained on transaction records")
    if q.levels != model.alphabet_size:
        raise IncompatibleModelError(f"quantizer has {q.levels} levels but model alphabet is {model.alphabet_size}")
    for it in items:
        if it.values is not None and it.symbols is None:
            it.symbols = preprocess.quantize(it.values, q)


def _check_model_alphabet(args, model):
    if args.levels and args.levels != model.alphabet_size:
        raise IncompatibleModelError(
            f"--levels {args.levels} does not match the model alphabet size {model.alphabet_size}"
        )


def _flow_score(model, symbols, L, limit):
    try:
        scores = subsequence_scores(model, symbols, L, limit)
    except InvalidSymbolError as exc:
        raise IncompatibleModelError(f"data symbol outside the model alphabet: {exc}") from None
    return majority_score(scores), scores


def _score_items(model, items, L, limit):
    out = []
    for it in items:
        if it.symbols is None or len(it.symbols) < L:
            out.append(None)
            continue
        out.append(_flow_score(model, it.symbols, L, limit))
    return out


# -- commands ----------------------------------------------------------------


def cmd_train(args) -> int:
    items = _read_items(args, args.input, "train")
    mode_labels = {"neg": {"good"}, "pos": {"hostile"}, "unsup": None}[args.mode]
    if args.input_format == "records" and mode_labels is not None:
        items = [it for it in items if it.label in mode_labels]
    if args.input_format == "records":
        usable = [it for it in items if it.values is not None and len(it.values) > 0]
    else:
        usable = [it for it in items if it.symbols is not None and len(it.symbols) > 0]
    if not usable:
        raise EmptyTrainingError("no training sequences survived filtering")

    calibration = []
    if args.target_fpr is not None:
        rng = np.random.default_rng(args.seed)
        order = rng.permutation(len(usable))
        n_cal = max(1, int(round(CALIBRATION_FRACTION * len(usable))))
        if n_cal >= len(usable):
            raise InsufficientDataError("too few sequences to hold out calibration data")
        cal_idx = set(order[:n_cal].tolist())
        calibration = [it for i, it in enumerate(usable) if i in cal_idx]
        usable = [it for i, it in enumerate(usable) if i not in cal_idx]

    k = _alphabet_for(args)
    m = lzmodel.new_model(k)
    if args.input_format == "records":
        q = preprocess.fit_uniform_quantizer(np.concatenate([it.values for it in usable]), k)
        m.quantizer = q
        _quantize_items(usable + calibration, m)
    m.train([it.symbols for it in usable])
    m.metadata.update(
        {"feature": args.feature, "subsequence_length": args.subseq, "mode": args.mode, "seed": args.seed}
    )
    if args.split:
        m.metadata["split"] = "train-half"

    if calibration:
        scored = [s for s in _score_items(m, calibration, args.subseq, args.max_subseq) if s is not None]
        if not scored:
            raise InsufficientDataError("no calibration sequence is long enough to score")
        threshold = threshold_for_fpr([s for s, _ in scored], args.target_fpr)
        m.metadata.update({"threshold_log2": threshold, "target_fpr": args.target_fpr,
                           "calibration_sequences": len(scored)})

    lzmodel.save(m, args.out)
    print(f"sequences={len(usable)} symbols={m.trained_symbol_count} phrases={m.phrase_count} "
          f"leaves={m.leaf_count} nodes={m.node_count}")
    if "threshold_log2" in m.metadata:
        print(f"threshold_log2={m.metadata['threshold_log2']!r} target_fpr={args.target_fpr}")
    return EXIT_OK


def _resolve_threshold(args, model) -> float:
    if args.threshold is not None:
        return args.threshold
    if args.target_fpr is not None:
        if not args.calibration:
            raise UsageError("--target-fpr with score/eval needs --calibration (normal data)")
        items = _read_items(args, args.calibration, "all")
        if args.input_format == "records":
            _quantize_items(items, model)
        scored = [s for s in _score_items(model, items, args.subseq, args.max_subseq) if s is not None]
        if not scored:
            raise InsufficientDataError("no calibration sequence is long enough to score")
        return threshold_for_fpr([s for s, _ in scored], args.target_fpr)
    if "threshold_log2" in model.metadata:
        return float(model.metadata["threshold_log2"])
    raise UsageError("no threshold: pass --threshold, --target-fpr with --calibration, or a calibrated model")


def _open_out(path):
    if path in (None, "-"):
        return _Stdout()
    return open(path, "w", newline="", encoding="utf-8")


class _Stdout:
    def __enter__(self):
        return sys.stdout

    def __exit__(self, *exc):
        return False


def cmd_score(args) -> int:
    m = lzmodel.load(args.model)
    _check_model_alphabet(args, m)
    items = _read_items(args, args.input, "test")
    if args.input_format == "records":
        _quantize_items(items, m)
    threshold = _resolve_threshold(args, m)
    results = _score_items(m, items, args.subseq, args.max_subseq)
    n_anom = 0
    with _open_out(args.out) as fh:
        fh.write(f"# threshold_log2={threshold!r} subseq={args.subseq} seed={args.seed} split={'test-half' if args.split else 'none'}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["flow_id", "score_log2", "subsequences", "votes_normal", "verdict"])
        for it, res in zip(items, results):
            if res is None:
                w.writerow([it.ident, "", 0, 0, "too-short"])
                continue
            score, subs = res
            votes = int((subs >= threshold).sum())
            verdict = "normal" if score >= threshold else "anomalous"
            n_anom += verdict == "anomalous"
            w.writerow([it.ident, repr(score), len(subs), votes, verdict])
    scored = sum(r is not None for r in results)
    print(f"flows={len(items)} scored={scored} anomalous={n_anom} too_short={len(items) - scored}",
          file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return EXIT_OK


def _labelled_scores(args, m, limit):
    normal, anomalous = [], []
    for it, res in zip(args._items, _score_items(m, args._items, args.subseq, limit)):
        if res is None:
            continue
        (anomalous if it.label in ("hostile", "anomalous") else normal).append(res[0])
    return normal, anomalous


def cmd_eval(args) -> int:
    m = lzmodel.load(args.model)
    _check_model_alphabet(args, m)
    items = _read_items(args, args.input, "test", label="normal")
    if args.anomalous:
        items += _read_items(args, args.anomalous, "test", label="anomalous")
    if args.input_format == "records":
        _quantize_items(items, m)
    args._items = items
    normal, anomalous = _labelled_scores(args, m, args.max_subseq)
    if not normal or not anomalous:
        raise InsufficientDataError(
            f"evaluation needs both classes (normal={len(normal)}, anomalous={len(anomalous)})"
        )
    report = roc_curve(normal, anomalous)
    header = [f"seed={args.seed} split={'test-half' if args.split else 'none'} subseq={args.subseq} "
              f"max_subseq={args.max_subseq} normal={len(normal)} anomalous={len(anomalous)}"]
    with _open_out(args.out) as fh:
        report.write_csv(fh, header)
    summary = sys.stderr if args.out in (None, "-") else sys.stdout
    print(f"auc={report.auc!r} normal={len(normal)} anomalous={len(anomalous)}", file=summary)

    if args.sweep:
        counts = [int(x) for x in args.sweep.split(",") if x.strip()]
        rows = []
        for n in counts:
            nn, aa = _labelled_scores(args, m, n)
            rows.append((n, roc_curve(nn, aa).auc))
        for n, auc in rows:
            print(f"subsequences={n} auc={auc!r}", file=summary)
        if args.sweep_out:
            with open(args.sweep_out, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["subsequences", "auc"])
                for n, auc in rows:
                    w.writerow([n, repr(auc)])
    return EXIT_OK


def _parse_vector(text):
    try:
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise InvalidSpecError(f"cannot parse probability vector {text!r}") from None


def _parse_matrix(text):
    if text.startswith("@"):
        with open(text[1:], encoding="utf-8") as fh:
            return json.load(fh)
    return [_parse_vector(row) for row in text.split(";")]


def build_source(args) -> sources.SourceSpec:
    if args.kind == "iid":
        if not args.probs:
            raise InvalidSpecError("iid source needs --probs")
        return sources.iid(_parse_vector(args.probs))
    if args.kind == "markov1":
        if not args.matrix:
            raise InvalidSpecError("markov1 source needs --matrix")
        return sources.markov1(_parse_matrix(args.matrix))
    if not args.model:
        raise InvalidSpecError("model source needs --model")
    return sources.from_model(lzmodel.load(args.model))


def synth_events(seqs, label, seed, client_offset=1, host=1, start=3600):
    """Transaction records whose time gaps (seconds) equal the symbols."""
    rng = np.random.default_rng(seed)
    lab = preprocess.Label(label)
    events = []
    for i, seq in enumerate(seqs):
        times = start + np.concatenate([[0], np.cumsum(seq)])
        if times[-1] >= preprocess.SECONDS_PER_DAY:
            raise InvalidSpecError("sequence too long to fit its time gaps in one day")
        for t in times:
            events.append(preprocess.NetworkEvent(
                t=int(t), tt=int(rng.integers(1, 200)), csb=int(rng.integers(200, 1000)),
                scb=int(rng.integers(200, 5000)), client_id=client_offset + i, host_id=host,
                label=lab, mime_type="text/html",
            ))
    return events


def cmd_synth(args) -> int:
    spec = build_source(args)
    seqs = spec.sequences(args.count, args.length, args.seed)
    with _open_out(args.out) as fh:
        if args.format == "symbols":
            write_symbol_rows(seqs, fh)
        else:
            preprocess.write_records(
                synth_events(seqs, args.label, args.seed, args.client_offset, args.host), fh
            )
    return EXIT_OK


def _segments(args):
    segs = []
    for path in args.input:
        for it in _read_items(args, path, "all"):
            segs.append((f"{os.path.splitext(os.path.basename(path))[0]}:{it.ident}", it.symbols))
    return segs


def cmd_hist(args) -> int:
    m = lzmodel.load(args.model)
    _check_model_alphabet(args, m)
    os.makedirs(args.out, exist_ok=True)
    if args.edges_from:
        with open(args.edges_from, encoding="utf-8") as fh:
            ref = profile.read_distribution(fh)
        if not isinstance(ref, profile.WindowHistogram):
            raise IncompatibleSupportError("--edges-from must be a histogram file")
        spec = ref.spec
        if args.window and args.window != spec.window_length:
            raise IncompatibleSupportError("--window differs from the reference histogram's window")
    elif args.reference:
        ref_seqs = [it.symbols for it in _read_items(args, args.reference, "all")]
        ref = profile.learn_histogram(m, ref_seqs, args.window or profile.DEFAULT_WINDOW, args.bins)
        spec = ref.spec
        with open(os.path.join(args.out, "reference.csv"), "w", newline="", encoding="utf-8") as fh:
            profile.write_distribution(ref, fh)
    else:
        raise UsageError("hist needs --reference (training data) or --edges-from")
    index = []
    for i, (name, seq) in enumerate(_segments(args)):
        try:
            h = profile.window_histogram(m, seq, spec.window_length, spec)
        except InvalidSymbolError as exc:
            raise IncompatibleModelError(f"segment {name}: {exc}") from None
        fname = f"segment_{i:04d}.csv"
        with open(os.path.join(args.out, fname), "w", newline="", encoding="utf-8") as fh:
            profile.write_distribution(h, fh)
        index.append((fname, name, h.n_windows))
    with open(os.path.join(args.out, "index.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["file", "segment", "windows"])
        w.writerows(index)
    print(f"segments={len(index)} window={spec.window_length} cells={spec.n_cells}")
    return EXIT_OK


def _load_distribution(path, tuple_length, seed):
    with open(path, encoding="utf-8") as fh:
        head = fh.read(1)
        fh.seek(0)
        if head == "{":
            m = lzmodel.deserialize(fh.read())
            return profile.tuple_distribution(m, tuple_length, seed=seed)
        return profile.read_distribution(fh)


def cmd_compare(args) -> int:
    ref = _load_distribution(args.reference, args.tuple_length, args.seed)
    rows = []
    for path in args.input:
        dist = _load_distribution(path, args.tuple_length, args.seed)
        rows.append((os.path.basename(path), profile.kl_divergence(dist, ref, args.epsilon),
                     profile.mse_distance(dist, ref)))
    with _open_out(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["input", "kl_bits", "mse"])
        for name, kl, mse in rows:
            w.writerow([name, repr(kl), repr(mse)])
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def _common(p, *, model=False, data=True):
    p.add_argument("--config", help="JSON file whose keys mirror the flags; flags win")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output path ('-' for stdout)")
    if model:
        p.add_argument("--model", required=False, help="model JSON file")
    if data:
        p.add_argument("--input-format", choices=["records", "symbols", "calls"], default="records")
        p.add_argument("--mapping", help="call_name,category CSV for --input-format calls")
        p.add_argument("--feature", choices=["td", "tt", "csb", "scb"], default="td")
        p.add_argument("--levels", type=int, help=f"alphabet size / quantization levels (default {DEFAULT_LEVELS})")
        p.add_argument("--lenient", action="store_true", help="skip malformed rows instead of failing")
        p.add_argument("--split", action="store_true",
                       help="seeded 50/50 flow split: train uses one half, score/eval the other")


def _detection(p):
    p.add_argument("--subseq", type=int, default=DEFAULT_SUBSEQ, help="subsequence length L")
    p.add_argument("--max-subseq", type=int, default=None,
                   help="use at most this many subsequences per sequence (majority vote)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--threshold", type=float, help="log2-probability threshold")
    g.add_argument("--target-fpr", type=float, help="calibrate the threshold to this false-alarm rate")
    p.add_argument("--calibration", help="normal data used to calibrate --target-fpr")


def build_parser():
    parser = argparse.ArgumentParser(prog="lzanomaly", description="LZ78-based universal anomaly detection")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit quantizer and phrase tree")
    _common(p)
    p.add_argument("--input")
    p.add_argument("--mode", choices=["neg", "pos", "unsup"], default="neg",
                   help="neg: good flows only, pos: hostile only, unsup: all")
    p.add_argument("--subseq", type=int, default=DEFAULT_SUBSEQ)
    p.add_argument("--max-subseq", type=int, default=None)
    p.add_argument("--target-fpr", type=float, help="hold out data and store a calibrated threshold")
    p.set_defaults(func=cmd_train, out="model.json")

    p = sub.add_parser("score", help="per-flow verdicts")
    _common(p, model=True)
    _detection(p)
    p.add_argument("--input")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="ROC curve and AUC on labelled data")
    _common(p, model=True)
    _detection(p)
    p.add_argument("--input")
    p.add_argument("--anomalous", help="anomalous sequences (symbols/calls formats)")
    p.add_argument("--sweep", nargs="?", const=SWEEP_DEFAULT,
                   help=f"also report AUC per subsequence count (default {SWEEP_DEFAULT})")
    p.add_argument("--sweep-out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="seeded synthetic sequences")
    _common(p, model=True, data=False)
    p.add_argument("--kind", choices=["iid", "markov1", "model"], required=True)
    p.add_argument("--probs", help="comma-separated probability vector (iid)")
    p.add_argument("--matrix", help="rows separated by ';' or @file.json (markov1)")
    p.add_argument("--length", type=int, default=100)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--format", choices=["symbols", "records"], default="symbols")
    p.add_argument("--label", choices=["good", "hostile"], default="good")
    p.add_argument("--client-offset", type=int, default=1)
    p.add_argument("--host", type=int, default=1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("hist", help="window histograms per segment")
    _common(p, model=True)
    p.add_argument("--input", nargs="+")
    p.add_argument("--reference", help="training data that fixes the bin edges")
    p.add_argument("--edges-from", help="reuse bin edges from a histogram file")
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--bins", type=int, default=profile.DEFAULT_BINS)
    p.set_defaults(func=cmd_hist, input_format="symbols")

    p = sub.add_parser("compare", help="KL and MSE between distributions or models")
    _common(p, data=False)
    p.add_argument("--reference", help="histogram/tuple CSV or model JSON")
    p.add_argument("--input", nargs="+")
    p.add_argument("--tuple-length", type=int, default=4)
    p.add_argument("--epsilon", type=float, default=profile.DEFAULT_EPSILON)
    p.set_defaults(func=cmd_compare)
    return parser, sub


def parse_args(argv=None):
    parser, sub = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            config = json.load(fh)
        if not isinstance(config, dict):
            parser.error("config file must hold a JSON object")
        config = {k.replace("-", "_"): v for k, v in config.items()}
        sub.choices[args.command].set_defaults(**config)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    needs_model = args.command in ("score", "eval", "hist") or (args.command == "synth" and args.kind == "model")
    missing = []
    if needs_model and not args.model:
        missing.append("--model")
    if args.command != "synth" and not args.input:
        missing.append("--input")
    if args.command == "compare" and not args.reference:
        missing.append("--reference")
    if missing:
        print(f"lzanomaly {args.command}: {', '.join(missing)} required", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IncompatibleModelError, IncompatibleSupportError) as exc:
        print(f"incompatible: {exc}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except (LZAnomalyError, OSError, ValueError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
