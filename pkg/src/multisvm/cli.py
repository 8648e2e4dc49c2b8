"""Command-line entry point.

Exit status is 0 on success, 1 on bad input (including usage errors) and
2 when an SVM fails to converge.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .assessment import build_confusion, format_confusion, kappa, z_test
from .errors import ConvergenceError, InputError, MultiSvmError
from .harness import DEFAULT_COSTS, SCENARIOS, ExperimentConfig, _json_safe, run_experiment, write_scene
from .kernels import DEFAULT_KERNELS, KernelSpec
from .modelfile import load_model, save_model
from .multiclass import ClassCatalog, Strategy, Voting, count_special, cross_validate_multiclass, train_multiclass
from .raster_io import (
    PixelSamples,
    atomic_write,
    classify_raster,
    extract_samples,
    read_labelmap,
    read_raster,
    read_samples,
    write_labelmap,
)
from .svm_binary import DEFAULT_MAX_PASSES, DEFAULT_TOLERANCE

log = logging.getLogger("multisvm")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_CONVERGENCE = 2


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors; 2 is reserved for convergence failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _kernel(text):
    try:
        return KernelSpec.parse(text)
    except MultiSvmError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _catalog(text):
    try:
        return ClassCatalog.parse(text)
    except MultiSvmError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _costs(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"costs must be comma-separated numbers, got {text!r}") from None


def _add_solver_flags(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE, help="KKT tolerance (default %(default)g)")
    p.add_argument("--max-passes", type=int, default=DEFAULT_MAX_PASSES,
                   help="iteration cap as a multiple of the sample count (default %(default)d)")
    p.add_argument("--voting", type=Voting, choices=list(Voting), default=Voting.MAJORITY,
                   metavar="{" + ",".join(v.value for v in Voting) + "}")
    p.add_argument("--catalog", type=_catalog, help="class catalog, e.g. '1=water,2=forest'")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="multisvm", description="Multiclass SVM raster classification and strategy comparison.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic raster with train/test sample files")
    p.add_argument("output_dir", type=Path)
    p.add_argument("--scenario", choices=sorted(SCENARIOS), default="overlap")
    p.add_argument("--name", default="scene")
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--classes", type=int, dest="n_classes")
    p.add_argument("--bands", type=int, dest="band_count")
    p.add_argument("--separation", type=float, dest="class_separation")
    p.add_argument("--overlap", type=float, dest="overlap_fraction")
    p.add_argument("--seed", type=int)
    p.add_argument("--train-per-class", type=int, default=40)
    p.add_argument("--test-per-class", type=int, default=100)

    p = sub.add_parser("train", help="train a multiclass model from a raster and training samples")
    p.add_argument("--raster", type=Path, help="raster to sample features from (for row,col,class samples)")
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--strategy", type=Strategy.parse, default=Strategy.ONE_AGAINST_ONE,
                   help="one-against-one (1a1) or one-against-all (1aa)")
    p.add_argument("--kernel", type=_kernel, default=KernelSpec.rbf(), help="e.g. linear, quadratic, polynomial:3, "
                   "rbf:gamma=0.5")
    p.add_argument("--cost", type=_costs, default=(1.0,),
                   help="cost C; a comma-separated list is cross-validated")
    p.add_argument("--folds", type=int, default=3)
    p.add_argument("-o", "--output", type=Path, required=True)
    _add_solver_flags(p)

    p = sub.add_parser("classify", help="classify every pixel of a raster")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--raster", type=Path, required=True)
    p.add_argument("-o", "--output", type=Path, required=True, help="label map header path")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("assess", help="accuracy assessment of one or two label maps")
    p.add_argument("labels", type=Path, nargs="+", help="one label map, or two to compare")
    p.add_argument("--reference", type=Path, required=True, help="row,col,class reference samples")
    p.add_argument("--catalog", type=_catalog)
    p.add_argument("--json", type=Path, help="also write the assessment as JSON")

    p = sub.add_parser("compare", help="run the full one-against-one vs one-against-all comparison")
    p.add_argument("--raster", type=Path, required=True)
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--test", type=Path, required=True)
    p.add_argument("-o", "--output-dir", type=Path, required=True)
    p.add_argument("--kernel", type=_kernel, action="append", dest="kernels",
                   help="repeatable; defaults to linear, quadratic, polynomial:3 and rbf")
    p.add_argument("--costs", type=_costs, default=None, help="cost grid, comma-separated")
    p.add_argument("--folds", type=int, default=3)
    p.add_argument("--workers", type=int, default=1)
    _add_solver_flags(p)
    return parser


def _cmd_synth(args) -> int:
    params = dict(SCENARIOS[args.scenario])
    for key in ("rows", "cols", "n_classes", "band_count", "class_separation", "overlap_fraction", "seed"):
        if getattr(args, key) is not None:
            params[key] = getattr(args, key)
    paths = write_scene(args.output_dir, args.name, train_per_class=args.train_per_class,
                        test_per_class=args.test_per_class, **params)
    for path in paths:
        print(path)
    return EXIT_OK


def _cmd_train(args) -> int:
    samples = read_samples(args.train)
    if isinstance(samples, PixelSamples):
        if args.raster is None:
            raise InputError(f"{args.train} holds pixel coordinates; --raster is required")
        samples = extract_samples(read_raster(args.raster), samples)
    kernel, cost = args.kernel.resolve(samples.n_features), args.cost[0]
    if len(args.cost) > 1:
        cv = cross_validate_multiclass(samples, (args.strategy,), [kernel], args.cost, args.folds, args.seed,
                                       args.voting, args.catalog, args.tolerance, args.max_passes)
        cost = cv.cost
        log.info("selected cost=%g (cv accuracy %.4f)", cost, cv.best_accuracy)
    model = train_multiclass(samples, args.strategy, kernel, cost, args.voting, args.seed, args.catalog,
                             args.tolerance, args.max_passes)
    save_model(model, args.output)
    print(f"{args.output}: {args.strategy.value}, {kernel.label}, C={cost:g}, {len(model.machines)} machines")
    return EXIT_OK


def _cmd_classify(args) -> int:
    model = load_model(args.model)
    labels = classify_raster(model, read_raster(args.raster), workers=args.workers)
    write_labelmap(labels, args.output)
    unclassified, mixed = count_special(labels)
    print(f"{args.output}: {labels.labels.size} pixels, {unclassified} unclassified, {mixed} mixed")
    return EXIT_OK


def _cmd_assess(args) -> int:
    if len(args.labels) > 2:
        raise InputError("assess takes one or two label maps")
    reference = read_samples(args.reference)
    if not isinstance(reference, PixelSamples):
        raise InputError(f"reference samples {args.reference} must use the row,col,class layout")
    catalog = args.catalog or ClassCatalog.from_codes(reference.classes)
    doc, reports = {"catalog": catalog.to_text(), "maps": []}, []
    for path in args.labels:
        labels = read_labelmap(path)
        matrix = build_confusion(labels, reference, catalog)
        rep = kappa(matrix)
        reports.append(rep)
        print(f"{path}: overall accuracy {rep.overall_accuracy:.4f}, kappa {rep.kappa:.4f} "
              f"(variance {rep.kappa_variance:.3g}), n={rep.n}")
        print(format_confusion(matrix))
        doc["maps"].append({"labels": str(path), "confusion": matrix.counts.tolist(), **rep.to_dict()})
    if len(reports) == 2:
        verdict = z_test(*reports)
        print(f"Z = {verdict.z:.4f}: {verdict.label}")
        doc.update(z=verdict.z, significant=verdict.significant, verdict=verdict.label)
    if args.json:
        atomic_write(args.json, (json.dumps(_json_safe(doc), indent=2, sort_keys=True) + "\n").encode("utf-8"))
    return EXIT_OK


def _cmd_compare(args) -> int:
    config = ExperimentConfig(args.raster, args.train, args.test, args.output_dir, catalog=args.catalog,
                              kernels=tuple(args.kernels or DEFAULT_KERNELS),
                              costs=args.costs or DEFAULT_COSTS, folds=args.folds, voting=args.voting,
                              seed=args.seed, workers=args.workers, tolerance=args.tolerance,
                              max_passes=args.max_passes)
    report = run_experiment(config)
    sys.stdout.write(report.to_text())
    return EXIT_OK


COMMANDS = {"synth": _cmd_synth, "train": _cmd_train, "classify": _cmd_classify, "assess": _cmd_assess,
            "compare": _cmd_compare}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConvergenceError as exc:
        print(f"multisvm: convergence error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (MultiSvmError, OSError) as exc:
        print(f"multisvm: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
