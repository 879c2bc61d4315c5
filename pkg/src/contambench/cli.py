"""contam-bench command line: dataset generation, contamination, training,
prediction, bound evaluation, mis-registration, and full experiment sweeps."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import bounds as bounds_mod
from .classifiers import ClassifierConfig, KernelSpec, SvmModel, evaluate, svm_train
from .contam import ContaminationSpec, contaminate
from .data import load_csv, save_csv
from .harness import (
    DEFAULT_EPSILON_GRID,
    ExperimentConfig,
    emit_report,
    run_contamination_experiment,
)
from .raster import (
    boundary_fraction,
    gen_cropland,
    load_scene,
    misreg_epsilon,
    misregister,
    save_scene,
)
from .rng import derive_seed
from .synthgen import FOUR_CLASS, NESTED_SQUARE, gen_gaussian_mixture, gen_pattern


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contam-bench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset or cropland scene")
    p.add_argument("--kind", required=True, choices=["gaussian-mixture", "four-class", "nested-square", "cropland"])
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-n", type=int, default=1000, help="sample size (datasets)")
    p.add_argument("-p", type=int, default=10, help="dimension (gaussian mixture)")
    p.add_argument("--seed-a", type=int, default=7, help="covariance factor seed (gaussian mixture)")
    p.add_argument("--mu", type=float, default=0.5, help="mean magnitude per coordinate (gaussian mixture)")
    p.add_argument("--oracle-out", help="write mixture oracle parameters as JSON")
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--patchiness", type=float, default=40.0)

    p = sub.add_parser("contaminate", help="contaminate a CSV dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--label-col", default="-1")
    p.add_argument("--class-count", type=int)
    p.add_argument("--spec", help="JSON file with a contamination spec")
    p.add_argument("--kind", choices=["c0", "c1", "c2", "cg", "cc", "cg100", "cc100"])
    p.add_argument("--epsilon", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target-class", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--mask-out", required=True)

    p = sub.add_parser("train", help="train an SVM and save the model as JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--label-col", default="-1")
    p.add_argument("--class-count", type=int)
    p.add_argument("--kernel", default="rbf", choices=["rbf", "polynomial", "linear"])
    p.add_argument("--gamma", type=float)
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--coef0", type=float, default=0.0)
    p.add_argument("-C", type=float, default=10.0)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--max-passes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model-out", required=True)

    p = sub.add_parser("predict", help="predict with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label-col", default="-1")
    p.add_argument("--class-count", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("bound", help="evaluate the theoretical bounds")
    p.add_argument("--epsilon", type=float, help="single contamination rate")
    p.add_argument("--grid", help="comma-separated rates (default standard grid)")
    p.add_argument("--weights", help="CSV file with descending class weights (enables the multi-class bound)")
    p.add_argument("--d-hat", type=float)
    p.add_argument("--vc-dim", type=int)
    p.add_argument("--m-prime", type=int)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--out-json", required=True)
    p.add_argument("--out-csv", required=True)

    p = sub.add_parser("misreg", help="mis-register a saved scene")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rotate", type=float, default=10.0)
    p.add_argument("--offset-sigma", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shared-offset", action="store_true")

    p = sub.add_parser("run", help="run a contamination experiment sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    return parser


def _cmd_gen(args) -> int:
    if args.kind == "cropland":
        scene = gen_cropland(args.width, args.height, args.classes, patchiness=args.patchiness, seed=args.seed)
        save_scene(scene, args.out)
        return 0
    if args.kind == "gaussian-mixture":
        dataset, oracle = gen_gaussian_mixture(args.p, np.full(args.p, args.mu), args.seed_a, args.n, args.seed)
        if args.oracle_out:
            with open(args.oracle_out, "w") as fh:
                fh.write(oracle.to_json() + "\n")
    else:
        kind = FOUR_CLASS if args.kind == "four-class" else NESTED_SQUARE
        dataset = gen_pattern(kind, args.n, args.seed)
    save_csv(dataset, args.out)
    return 0


def _label_col(raw: str) -> int | str:
    try:
        return int(raw)
    except ValueError:
        return raw


def _cmd_contaminate(args) -> int:
    dataset = load_csv(args.data, _label_col(args.label_col), class_count=args.class_count)
    if args.spec:
        with open(args.spec) as fh:
            spec = ContaminationSpec.from_json(fh.read())
    else:
        if args.kind is None or args.epsilon is None:
            raise SystemExit("either --spec or both --kind and --epsilon are required")
        spec = ContaminationSpec(args.kind, args.epsilon, seed=args.seed, target_class=args.target_class)
    out, mask = contaminate(dataset, spec)
    save_csv(out, args.out)
    with open(args.mask_out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["altered"])
        for flag in mask:
            writer.writerow([int(flag)])
    return 0


def _cmd_train(args) -> int:
    dataset = load_csv(args.data, _label_col(args.label_col), class_count=args.class_count)
    kernel = KernelSpec(args.kernel, gamma=args.gamma, degree=args.degree, coef0=args.coef0)
    model = svm_train(
        dataset, kernel, c=args.C, tol=args.tol, max_passes=args.max_passes, seed=args.seed
    )
    with open(args.model_out, "w") as fh:
        fh.write(model.to_json() + "\n")
    if not model.converged:
        print("warning: optimizer stopped before meeting the tolerance", file=sys.stderr)
    return 0


def _cmd_predict(args) -> int:
    with open(args.model) as fh:
        model = SvmModel.from_json(fh.read())
    dataset = load_csv(args.data, _label_col(args.label_col), class_count=args.class_count)
    pred = model.predict(dataset.features)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["prediction"])
        for value in pred:
            writer.writerow([int(value)])
    result = evaluate(model.predict, dataset)
    print(f"error_rate {result.error_rate:.4f}")
    return 0


def _cmd_bound(args) -> int:
    if args.grid:
        grid = [float(tok) for tok in args.grid.split(",") if tok.strip()]
    elif args.epsilon is not None:
        grid = [args.epsilon]
    else:
        grid = list(DEFAULT_EPSILON_GRID)
    weights = None
    if args.weights:
        with open(args.weights, newline="") as fh:
            cells = [c for row in csv.reader(fh) for c in row if c.strip()]
        weights = np.array([float(c) for c in cells])
    reports = []
    for eps in grid:
        multi = bounds_mod.multi_class_bound(eps, weights) if weights is not None else None
        bd = None
        if args.d_hat is not None and args.vc_dim is not None and args.m_prime is not None:
            bd = bounds_mod.ben_david_bound(args.d_hat, args.vc_dim, args.m_prime, args.delta, args.lam)
        reports.append(
            bounds_mod.BoundReport(
                epsilon=eps,
                two_class=bounds_mod.two_class_bound(eps),
                multi_class=multi,
                ben_david=bd,
                d_hat=args.d_hat,
                vc_dim=args.vc_dim,
                m_prime=args.m_prime,
                delta=args.delta if bd is not None else None,
                lam=args.lam if bd is not None else None,
            )
        )
    with open(args.out_json, "w") as fh:
        json.dump([r.to_json_dict() for r in reports], fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(args.out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epsilon", "two_class_bound", "multi_class_bound", "ben_david_bound"])
        for r in reports:
            writer.writerow(
                [
                    repr(r.epsilon),
                    repr(r.two_class),
                    "" if r.multi_class is None else repr(r.multi_class),
                    "" if r.ben_david is None else repr(r.ben_david),
                ]
            )
    return 0


def _cmd_misreg(args) -> int:
    original = load_scene(args.in_dir)
    distorted = misregister(
        original, args.rotate, args.offset_sigma, args.seed, shared_offset=args.shared_offset
    )
    save_scene(distorted, args.out)
    summary = {
        "epsilon_true": misreg_epsilon(original, distorted),
        "boundary_patch": boundary_fraction(distorted.labels, "patch"),
        "boundary_sampling": boundary_fraction(
            distorted.labels,
            "sampling",
            n_sample=min(200, distorted.labels.size),
            seed=derive_seed(args.seed, "bsample"),
        ),
        "output_width": distorted.width,
        "output_height": distorted.height,
    }
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return 0


def _cmd_run(args) -> int:
    with open(args.config) as fh:
        config = ExperimentConfig.from_json(fh.read())
    report = run_contamination_experiment(config, workers=args.workers)
    emit_report(report, out_dir=args.out)
    print(f"report written to {args.out} (config {report.config_hash})")
    return 2 if report.incomplete else 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "gen": _cmd_gen,
        "contaminate": _cmd_contaminate,
        "train": _cmd_train,
        "predict": _cmd_predict,
        "bound": _cmd_bound,
        "misreg": _cmd_misreg,
        "run": _cmd_run,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
