"""Command-line entry point: ``r2n <subcommand> [options]``.

Exit codes: 0 success, 1 a verification failed, 2 bad usage or input.
Options may also come from a ``--config`` file of ``key=value`` lines;
command-line flags override the file, which overrides built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import dataset as ds
from . import gp_pooling as gp
from . import gradcheck
from . import pgm
from .models import (REGRESSION_VARIANTS, VARIANTS, DigitClassifier, ModelSpec,
                     R2NPipeline, RotationEstimator, build_model)
from .trainer import (TASKS, TrainConfig, TrainingDiverged, evaluate_angle, evaluate_classification,
                      history_as_dicts, predict_labels, restore, train)
from .warp import rotate_image

log = logging.getLogger("r2n")

EXIT_OK, EXIT_VERIFY, EXIT_USAGE = 0, 1, 2

# Options that may be set by flag, config file or default (in that order).
DEFAULTS = {
    "data_root": "data/mnist",
    "manifest": "",
    "data_seed": 0,
    "seed": 0,
    "variant": "cnn-gp",
    "task": "",
    "epochs": 160,
    "batch_size": 128,
    "lr": 0.001,
    "beta1": 0.9,
    "beta2": 0.999,
    "dropout": 0.5,
    "gp_angular_deg": 5.0,
    "gp_radial": 2.0,
    "eval_every": 1,
    "limit": 0,
}


class UsageError(Exception):
    """Bad flags or unusable input; maps to exit code 2."""


# ---------------------------------------------------------------------------
# argument handling


def _common(p: argparse.ArgumentParser, *names: str) -> None:
    help_text = {
        "data_root": "directory holding the four MNIST IDX files (raw or .gz)",
        "manifest": "split manifest from build-dataset (default: draw splits from --data-seed)",
        "data_seed": "seed for drawing the rotated splits when no manifest is given",
        "seed": "seed for initialisation, shuffling and sampling",
        "variant": f"model variant: {', '.join(v for v in VARIANTS if v != 'r2n-demo')}",
        "task": f"training task; must agree with the variant ({', '.join(TASKS)})",
        "epochs": "training epochs",
        "batch_size": "mini-batch size",
        "lr": "Adam learning rate",
        "beta1": "Adam first-moment decay",
        "beta2": "Adam second-moment decay",
        "dropout": "dropout rate before the last layer of CNN estimators",
        "gp_angular_deg": "GP-Pooling angular kernel = stride, in degrees",
        "gp_radial": "GP-Pooling radial kernel = stride, in pixels",
        "eval_every": "validate every N epochs",
        "limit": "use only the first N test samples (0 = all)",
    }
    for name in names:
        flag = "--" + name.replace("_", "-")
        kind = type(DEFAULTS[name])
        p.add_argument(flag, dest=name, type=kind, default=None,
                       help=f"{help_text[name]} (default: {DEFAULTS[name]!r})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="r2n", description="Rotation estimation with global polar pooling.")
    parser.add_argument("--config", help="key=value file supplying defaults for any long option")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-dataset", help="draw the rotated-MNIST splits and write the manifest")
    _common(p, "data_root", "seed")
    p.add_argument("--out", default="runs/dataset", help="output directory")

    p = sub.add_parser("train", help="train one model variant")
    _common(p, "data_root", "manifest", "data_seed", "seed", "variant", "task", "epochs", "batch_size",
            "lr", "beta1", "beta2", "dropout", "gp_angular_deg", "gp_radial", "eval_every")
    p.add_argument("--out", help="output directory (default: runs/<variant>-seed<seed>)")

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    _common(p, "data_root", "manifest", "data_seed", "limit")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=("train", "validation", "test"))
    p.add_argument("--out", help="optional directory for eval.json")

    p = sub.add_parser("gradcheck", help="finite-difference check of every backward pass")
    _common(p, "seed")
    p.add_argument("--only", action="append", default=None,
                   help="suite or group to run (repeatable or comma separated), e.g. warp, gp_pool")
    p.add_argument("--list", action="store_true", help="list suite names and exit")
    p.add_argument("--out", help="optional directory for gradcheck.json")

    p = sub.add_parser("visualize-polar", help="dump GP-Pooling responses as PGM images")
    _common(p, "data_root")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--image", help="8-bit binary PGM input")
    src.add_argument("--index", type=int, help="index into the MNIST test images")
    p.add_argument("--angular-deg", type=float, default=5.0, help="angular kernel = stride in degrees")
    p.add_argument("--radial", type=float, default=1.0, help="radial kernel = stride in pixels")
    p.add_argument("--rotate-deg", type=float, default=10.0,
                   help="counterclockwise rotation for the companion response")
    p.add_argument("--out", default="runs/polar", help="output directory")

    p = sub.add_parser("nearest-neighbors", help="rank test images by pre-fc3 feature distance")
    _common(p, "data_root", "manifest", "data_seed", "seed", "limit")
    p.add_argument("--checkpoint", required=True, help="trained regression checkpoint")
    p.add_argument("--probes", help="comma separated test indices (default: seeded random)")
    p.add_argument("--num-probes", type=int, default=10)
    p.add_argument("--k", type=int, default=19, help="neighbours per probe")
    p.add_argument("--permutations", type=int, default=9999)
    p.add_argument("--out", default="runs/neighbors", help="output directory")

    p = sub.add_parser("r2n-demo", help="upright classifier with and without rectification")
    _common(p, "data_root", "manifest", "data_seed", "limit")
    p.add_argument("--estimator", required=True, help="rotation estimator checkpoint")
    p.add_argument("--classifier", required=True, help="upright digit classifier checkpoint")
    p.add_argument("--insert-at", default="image", choices=("image", "pool1"))
    p.add_argument("--check", action="store_true",
                   help="exit 1 unless R2N gains >= 15 points and ground truth >= R2N - 1 point")
    p.add_argument("--out", help="optional directory for r2n_demo.json")
    return parser


def read_config(path) -> dict:
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (t.strip() for t in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in DEFAULTS:
            raise UsageError(f"{path}:{lineno}: unknown option {key!r}")
        values[key] = value
    return values


def resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset options from the config file, then the defaults, and validate."""
    config = read_config(args.config) if args.config else {}
    for key, default in DEFAULTS.items():
        if not hasattr(args, key) or getattr(args, key) is not None:
            continue
        if key in config:
            try:
                setattr(args, key, type(default)(config[key]))
            except ValueError:
                raise UsageError(f"config option {key}: cannot parse {config[key]!r}") from None
        else:
            setattr(args, key, default)
    for key in ("epochs", "limit", "data_seed", "seed"):
        if getattr(args, key, 0) < 0:
            raise UsageError(f"--{key.replace('_', '-')} must be non-negative")
    for key in ("batch_size", "eval_every"):
        if getattr(args, key, 1) < 1:
            raise UsageError(f"--{key.replace('_', '-')} must be at least 1")
    return args


# ---------------------------------------------------------------------------
# shared helpers


def _load_splits(args, names=("train", "validation", "test")) -> ds.SplitSet:
    """Splits from the manifest (or drawn from --data-seed) with images rendered for ``names``."""
    mnist = ds.Mnist.load(args.data_root)
    if args.manifest:
        splits = ds.read_manifest(args.manifest, seed=-1)
    else:
        splits = ds.draw_splits(args.data_seed, len(mnist.train_labels), len(mnist.test_labels),
                                mnist.train_labels, mnist.test_labels)
    for name in names:
        ds.materialize(splits[name], mnist)
    return splits


def _upright(split: ds.Split, mnist: ds.Mnist) -> ds.Split:
    return ds.materialize(split.upright(), mnist)


def _limited(split: ds.Split, limit: int) -> ds.Split:
    return split.subset(np.arange(min(limit, len(split)))) if limit else split


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load_checkpoint(path):
    try:
        model, _ = ckpt.load(path)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    except ckpt.CheckpointError as exc:
        raise UsageError(f"{path}: {exc}") from None
    return model


def _gp_spec(args) -> gp.PolarGridSpec:
    return gp.PolarGridSpec.uniform(math.radians(args.gp_angular_deg), args.gp_radial)


def _evaluate(model, split: ds.Split) -> dict:
    task = model.spec.task
    out = {}
    if task in ("angle-regression", "stn-classification"):
        out["rmse_degrees"] = evaluate_angle(model, split)
    if task in ("stn-classification", "digit-classification"):
        out["accuracy"] = evaluate_classification(model, split)
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_build_dataset(args) -> int:
    mnist = ds.Mnist.load(args.data_root)
    splits = ds.draw_splits(args.seed, len(mnist.train_labels), len(mnist.test_labels),
                            mnist.train_labels, mnist.test_labels)
    out = _out_dir(args.out)
    digest = ds.write_manifest(splits, out / "manifest.txt")
    sizes = {s.name: len(s) for s in splits.splits()}
    thetas = np.concatenate([s.theta for s in splits.splits()])
    info = {"seed": args.seed, "sha256": digest, "sizes": sizes,
            "theta_min_degrees": float(np.degrees(thetas.min())),
            "theta_max_degrees": float(np.degrees(thetas.max()))}
    _write_json(out / "dataset.json", info)
    print(f"manifest {out / 'manifest.txt'} sha256={digest}")
    print("sizes " + " ".join(f"{k}={v}" for k, v in sizes.items()) + f" total={sum(sizes.values())}")
    print(f"theta range [{info['theta_min_degrees']:.3f}, {info['theta_max_degrees']:.3f}] degrees")
    return EXIT_OK


def cmd_train(args) -> int:
    if args.variant == "r2n-demo":
        raise UsageError("r2n-demo is assembled from trained checkpoints; use the r2n-demo subcommand")
    spec = ModelSpec(args.variant, seed=args.seed, gp_spec=_gp_spec(args), dropout=args.dropout)
    if args.task and args.task != spec.task:
        raise UsageError(f"variant {args.variant} trains with task {spec.task}, not {args.task}")
    config = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, beta1=args.beta1,
                         beta2=args.beta2, seed=args.seed, task=spec.task, eval_every=args.eval_every)
    out = _out_dir(args.out or f"runs/{args.variant}-seed{args.seed}")

    splits = _load_splits(args)
    if spec.task == "digit-classification":
        # the classifier never sees a rotated digit
        mnist = ds.Mnist.load(args.data_root)
        fit = ds.SplitSet(_upright(splits.train, mnist), _upright(splits.validation, mnist),
                          splits.test, splits.seed)
    else:
        fit = splits

    model = build_model(spec)
    metrics = out / "metrics.csv"
    metrics.unlink(missing_ok=True)
    started = time.perf_counter()
    try:
        result = train(model, fit, config, metrics_csv=metrics)
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    seconds = time.perf_counter() - started

    ckpt.save(model, out / "best.ckpt")
    best = [p.copy() for p in model.parameters()]
    restore(model, result.last_params)
    ckpt.save(model, out / "last.ckpt", result.optimizer)
    restore(model, best)

    test = {f"test_{k}": v for k, v in _evaluate(model, splits.test).items()}
    if spec.task == "digit-classification":
        mnist = ds.Mnist.load(args.data_root)
        test["test_accuracy_upright"] = evaluate_classification(model, _upright(splits.test, mnist))
    summary = {
        "variant": args.variant, "task": spec.task, "seed": args.seed,
        "data": {"manifest": args.manifest or None, "data_seed": None if args.manifest else args.data_seed},
        "config": vars(config), "model": spec.to_dict(), "num_parameters": model.num_parameters(),
        "epochs_run": args.epochs, "best_epoch": result.best_epoch, "best_validation": result.best_metric,
        "history": history_as_dicts(result.history), **test,
    }
    _write_json(out / "summary.json", summary)
    _write_json(out / "timing.json", {"train_seconds": seconds,
                                      "seconds_per_epoch": seconds / max(args.epochs, 1)})
    print(f"{args.variant}: best epoch {result.best_epoch} "
          + " ".join(f"{k}={v:.4f}" for k, v in test.items()) + f" ({seconds:.1f}s)")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = _load_checkpoint(args.checkpoint)
    if model.spec.variant == "r2n-demo":
        raise UsageError("evaluate r2n pipelines with the r2n-demo subcommand")
    splits = _load_splits(args, names=())
    split = _limited(splits[args.split], args.limit)
    ds.materialize(split, ds.Mnist.load(args.data_root))
    metrics = _evaluate(model, split)
    for k, v in metrics.items():
        print(f"{args.split} {k}={v:.4f}")
    if args.out:
        _write_json(_out_dir(args.out) / "eval.json",
                    {"checkpoint": str(args.checkpoint), "variant": model.spec.variant,
                     "split": args.split, "samples": len(split), **metrics})
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.list:
        print("\n".join(gradcheck.SUITES))
        return EXIT_OK
    only = [o.strip() for item in (args.only or []) for o in item.split(",") if o.strip()] or None
    try:
        results = gradcheck.run(only, seed=args.seed)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} suites passed"
          + (f"; failing: {', '.join(failed)}" if failed else ""))
    if args.out:
        _write_json(_out_dir(args.out) / "gradcheck.json",
                    {r.name: {"max_rel_error": r.max_rel_error, "threshold": r.threshold,
                              "passed": r.passed, "worst_tensor": r.worst_tensor,
                              "worst_index": list(r.worst_index)} for r in results})
    return EXIT_VERIFY if failed else EXIT_OK


def _polar_outputs(image: np.ndarray, spec: gp.PolarGridSpec):
    from scipy.ndimage import zoom

    binning = gp.plan_binning(*image.shape, spec)
    resp, _ = gp.gp_pool_forward(image[None, None].astype(np.float64), binning)
    resp = resp[0, 0]
    scaled = zoom(resp, (28 / resp.shape[0], 100 / resp.shape[1]), order=1, mode="nearest")
    return binning, resp, scaled


def cmd_visualize_polar(args) -> int:
    if args.image:
        try:
            image = pgm.read_pgm(args.image)
        except (OSError, pgm.PgmError) as exc:
            raise UsageError(f"cannot read image {args.image}: {exc}") from None
    else:
        images = ds.read_idx(ds.find_file(args.data_root, ds.FILES["test_images"]))
        if not 0 <= args.index < len(images):
            raise UsageError(f"--index must be in [0, {len(images)})")
        image = images[args.index].astype(np.float64)
    try:
        spec = gp.PolarGridSpec.uniform(math.radians(args.angular_deg), args.radial)
        binning, resp, scaled = _polar_outputs(image, spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rotated = rotate_image(image, math.radians(args.rotate_deg))
    _, rresp, rscaled = _polar_outputs(rotated, spec)

    out = _out_dir(args.out)
    for name, arr in (("input", image), ("response", resp), ("response_28x100", scaled),
                      ("rotated_input", rotated), ("rotated_response", rresp),
                      ("rotated_response_28x100", rscaled)):
        pgm.write_pgm(out / f"{name}.pgm", arr)

    rings = gp.comparable_rings(binning)
    valid = gp.occupancy(binning)[rings]
    shift = gp.angular_shift(resp[rings], rresp[rings], valid) if len(rings) else 0
    expected = args.rotate_deg / args.angular_deg
    info = {"response_shape": list(resp.shape), "rescaled_shape": list(scaled.shape),
            "rotate_degrees": args.rotate_deg, "peak_shift_columns": shift,
            "expected_shift_columns": expected}
    _write_json(out / "polar.json", info)
    print(f"response {resp.shape[0]}x{resp.shape[1]}, rescaled {scaled.shape[0]}x{scaled.shape[1]}")
    print(f"rotation {args.rotate_deg:g} deg: correlation peak at {shift} columns (expected {expected:g})")
    return EXIT_OK


def _features(model: RotationEstimator, images: np.ndarray, lo: int, hi: int) -> np.ndarray:
    return model.features(images[lo:hi], train=False).astype(np.float64)


def cmd_nearest_neighbors(args) -> int:
    model = _load_checkpoint(args.checkpoint)
    if not isinstance(model, RotationEstimator):
        raise UsageError(f"nearest-neighbors needs a regression checkpoint ({', '.join(REGRESSION_VARIANTS)})")
    splits = _load_splits(args, names=())
    test = _limited(splits.test, args.limit)
    n = len(test)
    if args.k < 1 or args.k >= n:
        raise UsageError(f"--k must be in [1, {n}) for a set of {n} images")
    if args.probes:
        try:
            probes = np.array([int(t) for t in args.probes.split(",")])
        except ValueError:
            raise UsageError(f"--probes must be comma separated integers, got {args.probes!r}") from None
        if probes.min() < 0 or probes.max() >= n:
            raise UsageError(f"probe indices must be in [0, {n})")
    else:
        probes = np.sort(np.random.default_rng(args.seed).choice(n, min(args.num_probes, n), replace=False))
    ds.materialize(test, ds.Mnist.load(args.data_root))

    batch = 500
    # probe features come from the same batches as the scan, so self-distance is exactly 0
    probe_feats = {}
    for b in sorted({int(p) // batch for p in probes}):
        lo = b * batch
        feats = _features(model, test.images, lo, min(lo + batch, n))
        for p in probes:
            if lo <= p < lo + batch:
                probe_feats[int(p)] = feats[p - lo]
    dist = np.empty((len(probes), n))
    for lo in range(0, n, batch):
        feats = _features(model, test.images, lo, min(lo + batch, n))
        for i, p in enumerate(probes):
            d = feats - probe_feats[int(p)]
            dist[i, lo:lo + len(feats)] = np.sqrt(np.einsum("ij,ij->i", d, d))

    theta_deg = np.degrees(test.theta)
    rows, neighbors, tiles = [], [], []
    for i, p in enumerate(probes):
        not_self = np.arange(n) != p
        order = np.lexsort((np.arange(n), dist[i], not_self))[:args.k + 1]
        neighbors.append(order[1:])
        for rank, j in enumerate(order):
            rows.append(f"{int(p)},{rank},{int(j)},{float(dist[i, j])!r},{float(theta_deg[j])!r},{int(test.digits[j])}")
            tiles.append(test.images[j, 0])
    nb = np.array(neighbors)
    observed = float(np.mean(np.abs(theta_deg[nb] - theta_deg[probes][:, None])))

    rng = np.random.default_rng([args.seed, 1])
    null = np.empty(args.permutations)
    for t in range(args.permutations):
        draw = rng.integers(0, n - 1, size=nb.shape)
        draw += draw >= probes[:, None]  # skip the probe itself
        null[t] = np.mean(np.abs(theta_deg[draw] - theta_deg[probes][:, None]))
    p_value = float((1 + np.sum(null <= observed)) / (args.permutations + 1))

    out = _out_dir(args.out)
    (out / "neighbors.csv").write_text("probe,rank,index,distance,theta_degrees,digit\n" + "\n".join(rows) + "\n")
    pgm.write_pgm(out / "montage.pgm", pgm.montage(tiles, cols=args.k + 1))
    stats = {"checkpoint": str(args.checkpoint), "k": args.k, "probes": [int(p) for p in probes],
             "mean_abs_gap_degrees": observed, "random_baseline_degrees": float(null.mean()),
             "permutations": args.permutations, "p_value": p_value,
             "self_distance_max": float(max(dist[i, p] for i, p in enumerate(probes)))}
    _write_json(out / "neighbors.json", stats)
    for i, p in enumerate(probes):
        gaps = np.abs(theta_deg[nb[i]] - theta_deg[p])
        print(f"probe {int(p)} theta={theta_deg[p]:7.2f} digit={int(test.digits[p])} "
              f"mean|gap|={gaps.mean():6.2f} deg, same digit {np.mean(test.digits[nb[i]] == test.digits[p]):.2f}")
    print(f"mean |theta gap| {observed:.2f} deg vs random {null.mean():.2f} deg, p={p_value:.2g}")
    return EXIT_OK


def cmd_r2n_demo(args) -> int:
    estimator = _load_checkpoint(args.estimator)
    classifier = _load_checkpoint(args.classifier)
    if not isinstance(estimator, RotationEstimator):
        raise UsageError(f"{args.estimator} is not a rotation estimator checkpoint")
    if not isinstance(classifier, DigitClassifier):
        raise UsageError(f"{args.classifier} is not a digit classifier checkpoint")
    splits = _load_splits(args, names=())
    test = _limited(splits.test, args.limit)
    ds.materialize(test, ds.Mnist.load(args.data_root))
    pipe = R2NPipeline(ModelSpec("r2n-demo", insert_at=args.insert_at), estimator, classifier)

    def accuracy(theta_of):
        correct = 0
        for lo in range(0, len(test), 500):
            x = test.images[lo:lo + 500]
            correct += int(np.sum(pipe.predict(x, theta_of(lo, x)) == test.digits[lo:lo + 500]))
        return correct / len(test)

    raw = float(np.mean(predict_labels(classifier, test.images) == test.digits))
    r2n = accuracy(lambda lo, x: None)
    gt = accuracy(lambda lo, x: test.theta[lo:lo + len(x)])
    gain_ok, bound_ok = r2n - raw >= 0.15, gt >= r2n - 0.01
    report = {"samples": len(test), "insert_at": args.insert_at, "accuracy_raw": raw,
              "accuracy_r2n": r2n, "accuracy_ground_truth": gt, "gain_points": 100 * (r2n - raw),
              "gain_at_least_15_points": gain_ok, "ground_truth_upper_bound": bound_ok}
    print(f"raw {raw:.4f}  r2n {r2n:.4f}  ground-truth theta {gt:.4f}  (gain {100 * (r2n - raw):+.1f} points)")
    if args.out:
        _write_json(_out_dir(args.out) / "r2n_demo.json", report)
    if args.check and not (gain_ok and bound_ok):
        print("check failed: " + ", ".join(k for k, ok in (("gain < 15 points", not gain_ok),
                                                           ("ground truth below R2N - 1 point", not bound_ok)) if ok))
        return EXIT_VERIFY
    return EXIT_OK


COMMANDS = {
    "build-dataset": cmd_build_dataset,
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "visualize-polar": cmd_visualize_polar,
    "nearest-neighbors": cmd_nearest_neighbors,
    "r2n-demo": cmd_r2n_demo,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with exit 2 itself
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](resolve(args))
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, ds.IdxFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
