"""Experiment orchestration: contaminate the training split, retrain, score on
the untouched test split, average over instances and repetitions, and compare
the mean accuracy loss against the theoretical bounds; report emission."""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import bounds as bounds_mod
from .classifiers import ClassifierConfig, evaluate
from .contam import ContaminationSpec, contaminate
from .data import Holdout, KFold, LabeledDataset, class_weights, load_csv, scale_unit_interval, split
from .plots import Series, line_chart
from .raster import boundary_fraction, gen_cropland, load_scene, misreg_epsilon, misregister
from .rng import derive_seed
from .synthgen import (
    FOUR_CLASS,
    NESTED_SQUARE,
    MixtureOracle,
    bayes_decision,
    gen_gaussian_mixture,
    gen_pattern,
    monte_carlo_risk,
)

__all__ = [
    "DataSource",
    "SplitSpec",
    "ExperimentConfig",
    "CellSummary",
    "ExperimentReport",
    "SceneConfig",
    "PipelineConfig",
    "MisregReport",
    "run_contamination_experiment",
    "run_misreg_experiment",
    "emit_report",
    "emit_misreg_report",
]

DEFAULT_EPSILON_GRID = (0.01, 0.02, 0.03, 0.04, 0.05, 0.10)
DEFAULT_KINDS = ("c1", "c2", "cg", "cc")


@dataclass(frozen=True)
class DataSource:
    kind: str  # "synthetic" | "csv" | "scene"
    pattern: str = "gaussian_mixture"  # synthetic only
    n: int = 3000
    p: int = 10
    seed_a: int = 7
    path: str | None = None  # csv file or scene directory
    label_column: int | str = -1
    class_count: int | None = None

    def __post_init__(self):
        if self.kind not in ("synthetic", "csv", "scene"):
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.kind != "synthetic" and not self.path:
            raise ValueError("csv/scene sources need a path")

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "pattern": self.pattern,
            "n": self.n,
            "p": self.p,
            "seed_a": self.seed_a,
            "path": self.path,
            "label_column": self.label_column,
            "class_count": self.class_count,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "DataSource":
        return cls(
            kind=obj["kind"],
            pattern=obj.get("pattern", "gaussian_mixture"),
            n=obj.get("n", 3000),
            p=obj.get("p", 10),
            seed_a=obj.get("seed_a", 7),
            path=obj.get("path"),
            label_column=obj.get("label_column", -1),
            class_count=obj.get("class_count"),
        )


@dataclass(frozen=True)
class SplitSpec:
    mode: str = "holdout"  # "holdout" | "kfold"
    fraction: float = 0.8
    k: int = 5

    def to_mode(self):
        return Holdout(self.fraction) if self.mode == "holdout" else KFold(self.k)

    def to_json_dict(self) -> dict:
        return {"mode": self.mode, "fraction": self.fraction, "k": self.k}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "SplitSpec":
        return cls(mode=obj.get("mode", "holdout"), fraction=obj.get("fraction", 0.8), k=obj.get("k", 5))


@dataclass(frozen=True)
class ExperimentConfig:
    source: DataSource = DataSource("synthetic")
    split: SplitSpec = SplitSpec()
    epsilon_grid: tuple = DEFAULT_EPSILON_GRID
    kinds: tuple = DEFAULT_KINDS
    instances: int = 100
    repetitions: int = 5
    scale: bool = False
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    master_seed: int = 0
    target_class: int | None = None  # required when kinds include c0
    mc_oracle_draws: int = 200_000

    def __post_init__(self):
        if self.instances < 1 or self.repetitions < 1:
            raise ValueError("instances and repetitions must be >= 1")
        for eps in self.epsilon_grid:
            if not 0.0 <= eps < 0.5:
                raise ValueError("epsilon grid values must be in [0, 0.5)")
        for kind in self.kinds:
            if kind == "c0" and self.target_class is None:
                raise ValueError("c0 requires target_class")

    def to_json_dict(self) -> dict:
        return {
            "source": self.source.to_json_dict(),
            "split": self.split.to_json_dict(),
            "epsilon_grid": list(self.epsilon_grid),
            "kinds": list(self.kinds),
            "instances": self.instances,
            "repetitions": self.repetitions,
            "scale": self.scale,
            "classifier": self.classifier.to_json_dict(),
            "master_seed": self.master_seed,
            "target_class": self.target_class,
            "mc_oracle_draws": self.mc_oracle_draws,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ExperimentConfig":
        return cls(
            source=DataSource.from_json_dict(obj["source"]),
            split=SplitSpec.from_json_dict(obj.get("split", {})),
            epsilon_grid=tuple(obj.get("epsilon_grid", DEFAULT_EPSILON_GRID)),
            kinds=tuple(obj.get("kinds", DEFAULT_KINDS)),
            instances=obj.get("instances", 100),
            repetitions=obj.get("repetitions", 5),
            scale=obj.get("scale", False),
            classifier=ClassifierConfig.from_json_dict(obj.get("classifier", {})),
            master_seed=obj.get("master_seed", 0),
            target_class=obj.get("target_class"),
            mc_oracle_draws=obj.get("mc_oracle_draws", 200_000),
        )

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_json_dict(json.loads(text))

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class CellSummary:
    kind: str
    epsilon: float
    mean_loss: float
    stderr: float
    bound_two_class: float
    bound_multi_class: float | None
    n_instances: int
    n_failed: int
    mean_error: float
    mean_excess_vs_rstar: float | None = None


@dataclass(frozen=True)
class ExperimentReport:
    config: ExperimentConfig
    config_hash: str
    class_count: int
    weights: tuple
    clean_error: float
    rows: tuple[CellSummary, ...]
    rep_seeds: tuple
    r_star: float | None = None
    incomplete: bool = False

    def to_json_dict(self) -> dict:
        return {
            "config": self.config.to_json_dict(),
            "config_hash": self.config_hash,
            "class_count": self.class_count,
            "weights": list(self.weights),
            "clean_error": self.clean_error,
            "r_star": self.r_star,
            "incomplete": self.incomplete,
            "rep_seeds": list(self.rep_seeds),
            "rows": [
                {
                    "kind": r.kind,
                    "epsilon": r.epsilon,
                    "mean_loss": r.mean_loss,
                    "stderr": r.stderr,
                    "bound_2class": r.bound_two_class,
                    "bound_multiclass": r.bound_multi_class,
                    "n_instances": r.n_instances,
                    "n_failed": r.n_failed,
                    "mean_error": r.mean_error,
                    "mean_excess_vs_rstar": r.mean_excess_vs_rstar,
                }
                for r in self.rows
            ],
        }


def _materialize(source: DataSource, master_seed: int) -> tuple[LabeledDataset, MixtureOracle | None]:
    if source.kind == "csv":
        return load_csv(source.path, source.label_column, class_count=source.class_count), None
    if source.kind == "scene":
        from .raster import scene_to_dataset

        return scene_to_dataset(load_scene(source.path)), None
    seed = derive_seed(master_seed, "dataset")
    if source.pattern == "gaussian_mixture":
        dataset, oracle = gen_gaussian_mixture(source.p, None, source.seed_a, source.n, seed)
        return dataset, oracle
    kind = FOUR_CLASS if source.pattern == "four_class" else NESTED_SQUARE
    if source.pattern not in ("four_class", "nested_square"):
        raise ValueError(f"unknown synthetic pattern {source.pattern!r}")
    return gen_pattern(kind, source.n, seed), None


def _dataset_hash(ds: LabeledDataset) -> str:
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(ds.features).tobytes())
    digest.update(np.ascontiguousarray(ds.labels).tobytes())
    return digest.hexdigest()


# worker context shared through fork
_CTX: dict = {}


def _run_cell(job):
    kind, eps, instance, rep = job
    config: ExperimentConfig = _CTX["config"]
    train, test, clean_err = _CTX["reps"][rep]
    seed = derive_seed(config.master_seed, "cell", kind, repr(eps), instance, rep)
    try:
        spec = ContaminationSpec(
            kind,
            eps,
            seed=seed,
            target_class=config.target_class if kind == "c0" else None,
        )
        contaminated, _ = contaminate(train, spec)
        model = config.classifier.fit(contaminated, seed=derive_seed(seed, "fit"))
        err = evaluate(model.predict, test).error_rate
        return job, err, err - clean_err, None
    except Exception as exc:  # noqa: BLE001 - cell failures must not abort the sweep
        return job, float("nan"), float("nan"), f"{type(exc).__name__}: {exc}"


def run_contamination_experiment(config: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """Full sweep over (kind, epsilon, instance, repetition) cells.

    The clean baseline is trained once per repetition; every cell retrains on
    a freshly contaminated copy of that repetition's training split and is
    scored on the untouched test split.  Failed cells are recorded, not fatal.
    """
    dataset, oracle = _materialize(config.source, config.master_seed)
    mode = config.split.to_mode()
    if isinstance(mode, KFold):
        # folds play the role of repetitions
        rep_pairs = split(dataset, mode, derive_seed(config.master_seed, "split"))
        reps = list(range(len(rep_pairs)))
        rep_seeds = [derive_seed(config.master_seed, "split")] * len(rep_pairs)
    else:
        reps = list(range(config.repetitions))
        rep_seeds = [derive_seed(config.master_seed, "split", rep) for rep in reps]
        rep_pairs = [split(dataset, mode, rep_seeds[rep])[0] for rep in reps]

    rep_data = []
    test_hashes = []
    for rep in reps:
        train, test = rep_pairs[rep]
        if config.scale:
            (train, test), _ = scale_unit_interval(train, (test,))
        clean_model = config.classifier.fit(train, seed=derive_seed(config.master_seed, "clean-fit", rep))
        clean_err = evaluate(clean_model.predict, test).error_rate
        rep_data.append((train, test, clean_err))
        test_hashes.append(_dataset_hash(test))

    r_star = None
    if oracle is not None:
        r_star = monte_carlo_risk(
            oracle,
            bayes_decision(oracle),
            config.mc_oracle_draws,
            derive_seed(config.master_seed, "r-star"),
            method="lemma1",
        )

    jobs = [
        (kind, eps, instance, rep)
        for kind in config.kinds
        for eps in config.epsilon_grid
        for instance in range(config.instances)
        for rep in reps
    ]
    _CTX["config"] = config
    _CTX["reps"] = rep_data
    try:
        if workers > 1:
            import multiprocessing as mp

            with mp.get_context("fork").Pool(workers) as pool:
                results = pool.map(_run_cell, jobs, chunksize=8)
        else:
            results = [_run_cell(job) for job in jobs]
    finally:
        _CTX.clear()

    # contamination must never have touched any test split
    for rep in reps:
        if _dataset_hash(rep_data[rep][1]) != test_hashes[rep]:
            raise RuntimeError("test split was mutated during the sweep")

    by_cell: dict[tuple[str, float], list] = {}
    ordered = sorted(results, key=lambda r: (config.kinds.index(r[0][0]), r[0][1], r[0][2], r[0][3]))
    for job, err, loss, failure in ordered:
        by_cell.setdefault((job[0], job[1]), []).append((err, loss, failure))

    weights = class_weights(dataset)
    clean_mean = float(np.mean([rd[2] for rd in rep_data]))
    rows = []
    incomplete = False
    for kind in config.kinds:
        for eps in config.epsilon_grid:
            entries = by_cell.get((kind, eps), [])
            good = [(err, loss) for err, loss, failure in entries if failure is None]
            n_failed = len(entries) - len(good)
            if n_failed:
                incomplete = True
            losses = np.array([loss for _, loss in good]) if good else np.array([np.nan])
            errs = np.array([err for err, _ in good]) if good else np.array([np.nan])
            multi = (
                multi_bound_or_none(eps, weights) if dataset.class_count > 2 else None
            )
            rows.append(
                CellSummary(
                    kind=kind,
                    epsilon=eps,
                    mean_loss=float(np.mean(losses)),
                    stderr=float(np.std(losses, ddof=1) / np.sqrt(losses.size)) if losses.size > 1 else 0.0,
                    bound_two_class=bounds_mod.two_class_bound(eps),
                    bound_multi_class=multi,
                    n_instances=len(good),
                    n_failed=n_failed,
                    mean_error=float(np.mean(errs)),
                    mean_excess_vs_rstar=float(np.mean(errs) - r_star) if r_star is not None else None,
                )
            )
    return ExperimentReport(
        config=config,
        config_hash=config.hash(),
        class_count=dataset.class_count,
        weights=tuple(float(w) for w in weights),
        clean_error=clean_mean,
        rows=tuple(rows),
        rep_seeds=tuple(rep_seeds),
        r_star=r_star,
        incomplete=incomplete,
    )


def multi_bound_or_none(eps: float, weights) -> float | None:
    try:
        return bounds_mod.multi_class_bound(eps, weights)
    except ValueError:
        return None


@dataclass(frozen=True)
class SceneConfig:
    width: int = 128
    height: int = 128
    class_count: int = 5
    patchiness: float = 40.0
    noise_sigma: float = 0.1
    n_bands: int = 10
    seed: int = 0

    def to_json_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "class_count": self.class_count,
            "patchiness": self.patchiness,
            "noise_sigma": self.noise_sigma,
            "n_bands": self.n_bands,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class PipelineConfig:
    rotation_deg: float = 10.0
    offset_sigma: float = 0.1
    shared_offset: bool = False
    seed: int = 0

    def to_json_dict(self) -> dict:
        return {
            "rotation_deg": self.rotation_deg,
            "offset_sigma": self.offset_sigma,
            "shared_offset": self.shared_offset,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class MisregReport:
    epsilon_true: float
    boundary_patch: float
    boundary_sampling: float
    fold_accuracy_clean: tuple
    fold_accuracy_misreg: tuple
    mean_accuracy_clean: float
    mean_accuracy_misreg: float
    mean_drop: float
    bound_at_true: float
    bound_at_patch: float | None
    bound_at_sampling: float | None
    class_count: int
    scene: SceneConfig
    pipeline: PipelineConfig
    seed: int

    def to_json_dict(self) -> dict:
        return {
            "epsilon_true": self.epsilon_true,
            "boundary_patch": self.boundary_patch,
            "boundary_sampling": self.boundary_sampling,
            "fold_accuracy_clean": list(self.fold_accuracy_clean),
            "fold_accuracy_misreg": list(self.fold_accuracy_misreg),
            "mean_accuracy_clean": self.mean_accuracy_clean,
            "mean_accuracy_misreg": self.mean_accuracy_misreg,
            "mean_drop": self.mean_drop,
            "bound_at_true": self.bound_at_true,
            "bound_at_patch": self.bound_at_patch,
            "bound_at_sampling": self.bound_at_sampling,
            "class_count": self.class_count,
            "scene": self.scene.to_json_dict(),
            "pipeline": self.pipeline.to_json_dict(),
            "seed": self.seed,
        }


def run_misreg_experiment(
    scene_config: SceneConfig,
    pipeline_config: PipelineConfig,
    classifier_config: ClassifierConfig,
    seed: int,
    n_pixels: int = 2000,
    n_folds: int = 5,
) -> MisregReport:
    """Train on clean pixels vs. mis-registered pixels, score both on clean
    test pixels, fold by fold.

    Mis-registered training rows pair the distorted band values at a pixel
    with the original land class at the aligned location, so the fraction of
    mismatched pairs equals the measured label-change rate.
    """
    original = gen_cropland(
        scene_config.width,
        scene_config.height,
        scene_config.class_count,
        profiles=None
        if scene_config.n_bands == 10 and scene_config.noise_sigma == 0.1
        else _profiles_for(scene_config),
        patchiness=scene_config.patchiness,
        seed=scene_config.seed,
    )
    distorted = misregister(
        original,
        pipeline_config.rotation_deg,
        pipeline_config.offset_sigma,
        pipeline_config.seed,
        shared_offset=pipeline_config.shared_offset,
    )
    eps_true = misreg_epsilon(original, distorted)
    b_patch = boundary_fraction(distorted.labels, "patch")
    n_bs = min(200, distorted.labels.size)
    b_sample = boundary_fraction(distorted.labels, "sampling", n_sample=n_bs, seed=derive_seed(seed, "bsample"))

    dr = distorted.origin[0] - original.origin[0]
    dc = distorted.origin[1] - original.origin[1]
    rows, cols = np.nonzero(distorted.valid)
    feats_clean = original.bands[:, rows + dr, cols + dc].T.copy()
    feats_mis = distorted.bands[:, rows, cols].T.copy()
    labels_clean = original.labels[rows + dr, cols + dc]

    total = rows.size
    take = min(n_pixels, total)
    picks = np.sort(
        np.random.Generator(np.random.Philox(key=derive_seed(seed, "pixel-sample"))).choice(
            total, size=take, replace=False
        )
    )
    clean_ds = LabeledDataset(feats_clean[picks], labels_clean[picks], original.class_count)
    mis_ds = LabeledDataset(feats_mis[picks], labels_clean[picks], original.class_count)

    from .data import split_indices

    idx_pairs = split_indices(clean_ds.n, KFold(n_folds), derive_seed(seed, "folds"))
    acc_clean, acc_mis = [], []
    for fold, (train_idx, test_idx) in enumerate(idx_pairs):
        test = clean_ds.subset(test_idx)
        m_clean = classifier_config.fit(clean_ds.subset(train_idx), seed=derive_seed(seed, "fit-clean", fold))
        m_mis = classifier_config.fit(mis_ds.subset(train_idx), seed=derive_seed(seed, "fit-mis", fold))
        acc_clean.append(evaluate(m_clean.predict, test).accuracy)
        acc_mis.append(evaluate(m_mis.predict, test).accuracy)

    weights = class_weights(clean_ds)

    def bound_at(eps: float) -> float | None:
        if not 0.0 <= eps < 0.5:
            return None
        if original.class_count > 2:
            return bounds_mod.multi_class_bound(eps, weights)
        return bounds_mod.two_class_bound(eps)

    mean_clean = float(np.mean(acc_clean))
    mean_mis = float(np.mean(acc_mis))
    return MisregReport(
        epsilon_true=eps_true,
        boundary_patch=b_patch,
        boundary_sampling=b_sample,
        fold_accuracy_clean=tuple(acc_clean),
        fold_accuracy_misreg=tuple(acc_mis),
        mean_accuracy_clean=mean_clean,
        mean_accuracy_misreg=mean_mis,
        mean_drop=mean_clean - mean_mis,
        bound_at_true=bound_at(eps_true) if bound_at(eps_true) is not None else float("nan"),
        bound_at_patch=bound_at(b_patch),
        bound_at_sampling=bound_at(b_sample),
        class_count=original.class_count,
        scene=scene_config,
        pipeline=pipeline_config,
        seed=seed,
    )


def _profiles_for(scene_config: SceneConfig):
    from .raster import VegetationProfileSet

    return VegetationProfileSet.default(
        scene_config.class_count, scene_config.n_bands, scene_config.noise_sigma
    )


def emit_report(report: ExperimentReport, formats=("csv", "svg", "json"), out_dir=".") -> dict:
    """Write the sweep report; returns {format: path}.  Bytes are a pure
    function of the report contents."""
    if not report.rows:
        raise ValueError("nothing to plot")
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    if "csv" in formats:
        path = os.path.join(out_dir, "report.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["kind", "epsilon", "mean_loss", "stderr", "bound_2class", "bound_multiclass", "n_instances"]
            )
            for r in report.rows:
                writer.writerow(
                    [
                        r.kind,
                        repr(r.epsilon),
                        repr(r.mean_loss),
                        repr(r.stderr),
                        repr(r.bound_two_class),
                        "" if r.bound_multi_class is None else repr(r.bound_multi_class),
                        r.n_instances,
                    ]
                )
        paths["csv"] = path
    if "json" in formats:
        path = os.path.join(out_dir, "report.json")
        with open(path, "w") as fh:
            json.dump(report.to_json_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")
        paths["json"] = path
    if "svg" in formats:
        path = os.path.join(out_dir, "report.svg")
        eps_sorted = sorted({r.epsilon for r in report.rows})
        series = []
        for kind in dict.fromkeys(r.kind for r in report.rows):
            rows = sorted((r for r in report.rows if r.kind == kind), key=lambda r: r.epsilon)
            series.append(Series(kind, tuple(r.epsilon for r in rows), tuple(r.mean_loss for r in rows)))
        series.append(
            Series(
                "bound e/(1-e)",
                tuple(eps_sorted),
                tuple(bounds_mod.two_class_bound(e) for e in eps_sorted),
                dashed=True,
            )
        )
        if report.class_count > 2:
            multi = [multi_bound_or_none(e, np.array(report.weights)) for e in eps_sorted]
            if all(m is not None for m in multi):
                series.append(Series("multi-class bound", tuple(eps_sorted), tuple(multi), dashed=True))
        svg = line_chart(
            series,
            title=f"mean accuracy loss vs contamination rate ({report.config.source.kind})",
            x_label="contamination rate",
            y_label="mean loss",
        )
        with open(path, "w") as fh:
            fh.write(svg)
        paths["svg"] = path
    return paths


def emit_misreg_report(report: MisregReport, out_dir=".") -> dict:
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    path = os.path.join(out_dir, "misreg_report.json")
    with open(path, "w") as fh:
        json.dump(report.to_json_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    paths["json"] = path
    path = os.path.join(out_dir, "misreg_report.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fold", "accuracy_clean_train", "accuracy_misreg_train"])
        for i, (a, m) in enumerate(zip(report.fold_accuracy_clean, report.fold_accuracy_misreg)):
            writer.writerow([i, repr(a), repr(m)])
        writer.writerow(["mean", repr(report.mean_accuracy_clean), repr(report.mean_accuracy_misreg)])
    paths["csv"] = path
    return paths
