"""Command line entry point: ``resfeats <command> ...``.

Options may also come from a flat ``key=value`` file given with
``--config``; keys are option names with dashes replaced by underscores.
Flags on the command line win over the file.
"""

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import container
from .errors import InvalidConfig, MetaMismatch, ResFeatsError, ShapeMismatch
from .pca import load_pca, pca_fit, save_pca, select_n
from .pipeline.dataset import ingest, split
from .pipeline.features import (
    FeatureSet,
    extract_features,
    load_features,
    reduce_features,
    save_features,
)
from .pipeline.images import IMAGENET_MEAN
from .pipeline.metrics import evaluate
from .pipeline.toy import make_toy
from .resnet import TapName, build_resnet, load_weights, variant_from_name
from .scnn import TrainConfig, load_scnn, save_scnn, scnn_build, scnn_predict, scnn_train
from .svm import cross_validate, decision_scores, load_svm, save_svm, svm_train

log = logging.getLogger("resfeats")


def _ints(text):
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def _floats(text):
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _grid(text):
    """Comma list of C values; ``2^-5`` style powers are accepted."""
    values = []
    for item in str(text).split(","):
        item = item.strip()
        if not item:
            continue
        if item.startswith("2^"):
            values.append(2.0 ** float(item[2:]))
        else:
            values.append(float(item))
    return tuple(values)


# ---------------------------------------------------------------- extract

def _load_model(args):
    variant_name = args.variant
    widths = _ints(args.widths) if args.widths else None
    depths = _ints(args.depths) if args.depths else None
    sidecar = container.meta_path(args.weights)
    if variant_name == "mini" and sidecar.exists():
        meta = container.load_meta(args.weights)
        widths = widths or _ints(meta.get("widths", ""))
        depths = depths or _ints(meta.get("depths", ""))
    variant = variant_from_name(variant_name, widths, depths)
    return load_weights(build_resnet(variant), args.weights)


def cmd_extract(args):
    model = _load_model(args)
    dataset = ingest(args.data)
    if args.split_train is not None:
        dataset = split(dataset, args.split_train, args.split_val, seed=args.seed)
    elif args.part != "all":
        raise InvalidConfig("--part needs --split-train")
    samples = dataset.part(args.part)
    pca = load_pca(args.pca) if args.pca else None
    fs = extract_features(
        model, samples, args.tap, reduction=pca, augment=args.augment16, workers=args.workers,
        mean=_floats(args.mean),
        extra_meta={"classes": ",".join(dataset.classes), "part": args.part, "seed": args.seed},
    )
    save_features(fs, args.out)
    print(f"wrote {len(fs)} rows x {fs.features.shape[1]} dims to {args.out}")


# -------------------------------------------------------------------- pca

def cmd_pca_fit(args):
    fs = load_features(args.features)
    n = args.n
    if args.candidates:
        if not args.val:
            raise InvalidConfig("--candidates needs --val")
        n, accs = select_n(_ints(args.candidates), fs, load_features(args.val), C=args.C, seed=args.seed)
        for cand, acc in accs.items():
            print(f"n={cand} val_accuracy={acc:.4f}")
    if n is None:
        raise InvalidConfig("give --n or --candidates")
    model = pca_fit(fs.features, n)
    save_pca(model, args.out)
    print(f"fitted PCA n={model.n} on {len(fs)} rows; wrote {args.out}")


def cmd_pca_apply(args):
    fs = reduce_features(load_features(args.features), load_pca(args.model))
    save_features(fs, args.out)
    print(f"wrote {len(fs)} rows x {fs.features.shape[1]} dims to {args.out}")


# -------------------------------------------------------------------- svm

def cmd_svm_cv(args):
    fs = load_features(args.features)
    report = cross_validate(fs.features, fs.labels, grid=_grid(args.grid), k=args.folds, seed=args.seed,
                            tol=args.tol, max_iter=args.max_iter, normalize=not args.no_normalize)
    for C, accs in zip(report.grid, report.fold_accuracies):
        print(f"C={C:g} mean_accuracy={accs.mean():.4f}")
    print(f"chosen_C={report.chosen_C:g}")
    if args.report:
        from .report import write_cv_report
        write_cv_report(report, args.report)
    return report


def cmd_svm_train(args):
    fs = load_features(args.features)
    C = args.C
    if C is None:
        C = cmd_svm_cv(args).chosen_C
    model = svm_train(fs.features, fs.labels, C=C, tol=args.tol, max_iter=args.max_iter,
                      seed=args.seed, normalize=not args.no_normalize)
    save_svm(model, args.out)
    print(f"trained {len(model.classes)}-class SVM with C={C:g}; wrote {args.out}")


def _vote(fs: FeatureSet, scores, classes, mode):
    """Collapse per-view scores to per-image rows when voting by mean."""
    if mode == "independent":
        index = np.arange(len(fs))
        return index, scores, classes[np.argmax(scores, axis=1)]
    groups = np.unique(fs.groups)
    pooled = np.stack([scores[fs.groups == g].mean(axis=0) for g in groups])
    return groups, pooled, classes[np.argmax(pooled, axis=1)]


def _write_predictions(path, index, scores, labels):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "label"] + [f"score_{k}" for k in range(scores.shape[1])])
        for i, label, row in zip(index, labels, scores):
            w.writerow([int(i), int(label)] + [f"{s:.6g}" for s in row])


def cmd_svm_predict(args):
    model = load_svm(args.model)
    fs = load_features(args.features)
    scores = decision_scores(model, fs.features)
    index, scores, labels = _vote(fs, scores, model.classes, args.vote)
    _write_predictions(args.out, index, scores, labels)
    print(f"wrote {len(labels)} predictions to {args.out}")


# ------------------------------------------------------------------- scnn

def cmd_scnn_train(args):
    fs = load_features(args.features)
    maps = fs.maps()
    k = args.num_classes or int(fs.labels.max()) + 1
    cfg = TrainConfig(learning_rate=args.lr, momentum=args.momentum, epochs=args.epochs,
                      batch_size=args.batch_size, seed=args.seed, weight_decay=args.weight_decay)
    head = scnn_build(maps.shape[1:], k, seed=args.seed, conv_channels=_ints(args.conv_channels),
                      fc_width=args.fc_width)
    head, losses = scnn_train(head, maps, fs.labels, cfg,
                              callback=lambda e, loss: log.info("epoch %d loss %.5f", e + 1, loss))
    save_scnn(head, args.out, cfg=cfg)
    print(f"trained sCNN head for {cfg.epochs} epochs, final loss {losses[-1]:.5f}; wrote {args.out}")
    if args.report:
        from .report import write_loss_report
        write_loss_report(losses, args.report)


def cmd_scnn_eval(args):
    head = load_scnn(args.model)
    fs = load_features(args.features)
    _, probs = scnn_predict(head, fs.maps())
    index, scores, labels = _vote(fs, probs.astype(np.float64), np.arange(head.num_classes), args.vote)
    _write_predictions(args.out, index, scores, labels)
    print(f"wrote {len(labels)} predictions to {args.out}")


# ------------------------------------------------------------------- eval

def _read_labels(path):
    """Labels from a predictions CSV (``label`` column) or a feature cache (one per image)."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        if rows and "label" not in rows[0]:
            raise MetaMismatch(f"{path}: no 'label' column")
        return np.array([int(r["label"]) for r in rows], dtype=np.int64), None
    fs = load_features(path)
    return fs.labels, fs


def cmd_eval(args):
    pred, _ = _read_labels(args.pred)
    truth, fs = _read_labels(args.truth)
    if fs is not None and truth.size != pred.size:
        # predictions were pooled per image
        _, first = np.unique(fs.groups, return_index=True)
        truth = fs.labels[np.sort(first)]
    if truth.size != pred.size:
        raise ShapeMismatch(f"{pred.size} predictions but {truth.size} truth labels")
    k = args.num_classes or int(max(pred.max(), truth.max())) + 1
    result = evaluate(pred, truth, k)
    print(f"accuracy={result.overall_accuracy:.4f} ({int(np.trace(result.confusion))}/{truth.size})")
    if args.report:
        from .report import write_eval_report
        names = None
        if fs is not None and fs.meta.get("classes"):
            names = fs.meta["classes"].split(",")
            names = names if len(names) == k else None
        write_eval_report(result, args.report, names)
    return result


# ------------------------------------------------------------------- misc

def cmd_make_toy(args):
    out = make_toy(args.out, seed=args.seed)
    print(f"wrote toy dataset and mini weights under {out}")


def cmd_inspect_weights(args):
    entries = container.load(args.file)
    total = 0
    for name, arr in entries.items():
        total += arr.size
        print(f"{name}\t{'x'.join(map(str, arr.shape))}")
    print(f"# {len(entries)} tensors, {total} values")


def build_parser():
    parser = argparse.ArgumentParser(prog="resfeats", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="flat key=value option file")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def seeded(p):
        p.add_argument("--seed", type=int, default=0)
        return p

    p = seeded(sub.add_parser("extract", help="extract ResFeats from an image directory"))
    p.add_argument("--weights", required=True)
    p.add_argument("--variant", choices=("resnet50", "resnet152", "mini"), default="resnet50")
    p.add_argument("--widths", help="mini variant stage widths, e.g. 16,32,64,128")
    p.add_argument("--depths", help="mini variant blocks per stage, e.g. 1,1,1,1")
    p.add_argument("--tap", choices=[t.value for t in TapName], default="res5c")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--augment16", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--split-train", type=int, help="per-class training images for a random split")
    p.add_argument("--split-val", type=int, default=0)
    p.add_argument("--part", choices=("all", "train", "val", "test"), default="all")
    p.add_argument("--pca", help="reduce rows with a fitted PCA model")
    p.add_argument("--mean", default=",".join(map(str, IMAGENET_MEAN)), help="per-channel mean r,g,b")
    p.set_defaults(func=cmd_extract)

    pca = sub.add_parser("pca", help="fit or apply PCA").add_subparsers(dest="action", required=True)
    p = seeded(pca.add_parser("fit"))
    p.add_argument("--features", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--candidates", help="comma list of n to choose from on --val")
    p.add_argument("--val")
    p.add_argument("--C", type=float, default=1.0, help="SVM C used when choosing n")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pca_fit)
    p = pca.add_parser("apply")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pca_apply)

    svm = sub.add_parser("svm", help="linear SVM").add_subparsers(dest="action", required=True)

    def svm_opts(p):
        seeded(p)
        p.add_argument("--features", required=True)
        p.add_argument("--folds", type=int, default=4)
        p.add_argument("--grid", default=",".join(f"2^{e}" for e in range(-5, 6, 2)))
        p.add_argument("--tol", type=float, default=1e-3)
        p.add_argument("--max-iter", type=int, default=1000)
        p.add_argument("--no-normalize", action="store_true", help="skip L2 row normalization")
        p.add_argument("--report", help="directory for cv.csv / cv.png")
        return p

    p = svm_opts(svm.add_parser("train"))
    p.add_argument("--C", type=float, help="fixed C; cross-validate over --grid when omitted")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_svm_train)
    p = svm_opts(svm.add_parser("cv"))
    p.set_defaults(func=cmd_svm_cv)
    p = svm.add_parser("predict")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vote", choices=("mean", "independent"), default="mean")
    p.set_defaults(func=cmd_svm_predict)

    scnn = sub.add_parser("scnn", help="shallow CNN head").add_subparsers(dest="action", required=True)
    p = seeded(scnn.add_parser("train"))
    defaults = TrainConfig()
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=defaults.epochs)
    p.add_argument("--lr", type=float, default=defaults.learning_rate)
    p.add_argument("--momentum", type=float, default=defaults.momentum)
    p.add_argument("--batch-size", type=int, default=defaults.batch_size)
    p.add_argument("--weight-decay", type=float, default=defaults.weight_decay)
    p.add_argument("--conv-channels", default="512")
    p.add_argument("--fc-width", type=int, default=4096)
    p.add_argument("--num-classes", type=int)
    p.add_argument("--report", help="directory for loss.csv / loss.png")
    p.set_defaults(func=cmd_scnn_train)
    p = scnn.add_parser("eval")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vote", choices=("mean", "independent"), default="mean")
    p.set_defaults(func=cmd_scnn_eval)

    p = sub.add_parser("eval", help="score predictions against truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True, help="feature cache or predictions-style CSV")
    p.add_argument("--num-classes", type=int)
    p.add_argument("--report", help="directory for summary/per-class/confusion CSVs and confusion.png")
    p.set_defaults(func=cmd_eval)

    p = seeded(sub.add_parser("make-toy", help="write the synthetic 3-class dataset and mini weights"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_toy)

    p = sub.add_parser("inspect-weights", help="list tensors in an RFT1 container")
    p.add_argument("file")
    p.set_defaults(func=cmd_inspect_weights)
    return parser


def _subparser_chain(parser, args):
    """The parsers selected by the parsed command, outermost first."""
    chain = []
    current = parser
    for dest in ("command", "action"):
        value = getattr(args, dest, None)
        actions = [a for a in current._actions if isinstance(a, argparse._SubParsersAction)]
        if value is None or not actions:
            break
        current = actions[0].choices[value]
        chain.append(current)
    return chain


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        values = container.parse_kv(Path(args.config).read_text(encoding="utf-8"), args.config)
        for sub in _subparser_chain(parser, args):
            actions = {a.dest: a for a in sub._actions}
            defaults = {}
            for key, value in values.items():
                action = actions.get(key.replace("-", "_"))
                if action is None:
                    continue
                if isinstance(action, argparse._StoreTrueAction):
                    value = value.lower() in ("1", "true", "yes", "on")
                defaults[action.dest] = value
            sub.set_defaults(**defaults)
        # re-parse so flags given explicitly override the file
        args = parser.parse_args(argv)
    return args


def main(argv=None):
    try:
        args = parse_args(argv)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ResFeatsError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
