"""Consistent classifiers trained from scratch: kernel SVM via sequential
pairwise dual optimization, and k-nearest-neighbor; plus 0-1 evaluation.

The SVM solves the soft-margin dual one violating pair at a time: the row
with the largest KKT violation is paired with the row maximizing the error
difference, the pair subproblem is solved exactly in closed form, and the
error cache is updated incrementally.  Multi-class problems train one binary
machine per unordered class pair and vote.
"""

from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from itertools import combinations

import numpy as np

from .data import LabeledDataset
from .rng import spawn_rng

__all__ = [
    "KernelSpec",
    "BinarySvm",
    "SvmModel",
    "KnnModel",
    "ClassifierConfig",
    "EvalResult",
    "svm_train",
    "svm_decision",
    "knn_classify",
    "knn_predict",
    "evaluate",
    "max_kkt_violation",
]

DEFAULT_CACHE_BYTES = 256 << 20


@dataclass(frozen=True)
class KernelSpec:
    """rbf(gamma) | polynomial(degree, gamma, coef0) | linear.

    ``gamma=None`` resolves to 1/p when training starts.
    """

    name: str
    gamma: float | None = None
    degree: int = 3
    coef0: float = 0.0

    def __post_init__(self):
        if self.name not in ("rbf", "polynomial", "linear"):
            raise ValueError(f"unknown kernel {self.name!r}")
        if self.gamma is not None and self.gamma <= 0 and self.name != "linear":
            raise ValueError("gamma must be positive")
        if self.name == "polynomial" and self.degree < 1:
            raise ValueError("polynomial degree must be >= 1")

    @classmethod
    def rbf(cls, gamma: float | None = None) -> "KernelSpec":
        return cls("rbf", gamma=gamma)

    @classmethod
    def polynomial(cls, degree: int = 3, gamma: float | None = None, coef0: float = 0.0) -> "KernelSpec":
        return cls("polynomial", gamma=gamma, degree=degree, coef0=coef0)

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls("linear")

    def resolve(self, p: int) -> "KernelSpec":
        if self.gamma is None and self.name != "linear":
            return replace(self, gamma=1.0 / p)
        return self

    def to_json_dict(self) -> dict:
        return {"name": self.name, "gamma": self.gamma, "degree": self.degree, "coef0": self.coef0}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "KernelSpec":
        return cls(obj["name"], gamma=obj.get("gamma"), degree=obj.get("degree", 3), coef0=obj.get("coef0", 0.0))


def kernel_matrix(spec: KernelSpec, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """K[i, j] = k(x_i, z_j)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if spec.name == "linear":
        return x @ z.T
    if spec.name == "polynomial":
        return (spec.gamma * (x @ z.T) + spec.coef0) ** spec.degree
    sq = (
        np.sum(x * x, axis=1)[:, None]
        + np.sum(z * z, axis=1)[None, :]
        - 2.0 * (x @ z.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-spec.gamma * sq)


class _GramCache:
    """Kernel rows for the solver: full Gram when it fits the byte budget,
    otherwise an LRU row cache."""

    def __init__(self, x: np.ndarray, spec: KernelSpec, budget_bytes: int):
        self.x = x
        self.spec = spec
        n = x.shape[0]
        self.full: np.ndarray | None = None
        self._rows: OrderedDict[int, np.ndarray] = OrderedDict()
        if n * n * 8 <= budget_bytes:
            self.full = kernel_matrix(spec, x, x)
            self.diag = np.ascontiguousarray(np.diag(self.full))
        else:
            self.max_rows = max(2, budget_bytes // (n * 8))
            if spec.name == "rbf":
                self.diag = np.ones(n)
            else:
                self.diag = np.einsum("ij,ij->i", x, x)
                if spec.name == "polynomial":
                    self.diag = (spec.gamma * self.diag + spec.coef0) ** spec.degree
        self.n = n

    def row(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i]
        got = self._rows.get(i)
        if got is not None:
            self._rows.move_to_end(i)
            return got
        row = kernel_matrix(self.spec, self.x[i : i + 1], self.x)[0]
        self._rows[i] = row
        if len(self._rows) > self.max_rows:
            self._rows.popitem(last=False)
        return row


def _smo(
    gram: _GramCache,
    y: np.ndarray,
    c: float,
    tol: float,
    max_steps: int,
    rng: np.random.Generator,
    record_objective: bool = False,
):
    """Maximize the soft-margin dual by repeated exact two-variable steps.

    Returns (alpha, bias, converged, steps, objective_trace).
    """
    n = y.size
    alpha = np.zeros(n)
    b = 0.0
    errors = -y.astype(np.float64)  # decision value minus target, starts at f == 0
    stuck = np.zeros(n, dtype=bool)
    trace: list[float] = []
    steps = 0
    converged = False

    def objective() -> float:
        live = alpha > 0
        if not np.any(live):
            return 0.0
        idx = np.flatnonzero(live)
        k_sub = np.array([gram.row(i)[idx] for i in idx])
        av = alpha[idx] * y[idx]
        return float(alpha.sum() - 0.5 * av @ k_sub @ av)

    def take_step(i1: int, i2: int) -> bool:
        nonlocal b, errors
        if i1 == i2:
            return False
        a1o, a2o = alpha[i1], alpha[i2]
        y1, y2 = y[i1], y[i2]
        e1, e2 = errors[i1], errors[i2]
        s = y1 * y2
        if s < 0:
            lo, hi = max(0.0, a2o - a1o), min(c, c + a2o - a1o)
        else:
            lo, hi = max(0.0, a1o + a2o - c), min(c, a1o + a2o)
        if hi - lo < 1e-12:
            return False
        k1 = gram.row(i1)
        k2 = gram.row(i2)
        k11, k22, k12 = k1[i1], k2[i2], k1[i2]
        curve = k11 + k22 - 2.0 * k12
        if curve > 1e-15:
            a2 = a2o + y2 * (e1 - e2) / curve
            a2 = min(hi, max(lo, a2))
        else:
            # flat or concave segment: the maximum sits at an endpoint
            slope = y2 * (e1 - e2)
            gain_lo = slope * (lo - a2o) - 0.5 * curve * (lo - a2o) ** 2
            gain_hi = slope * (hi - a2o) - 0.5 * curve * (hi - a2o) ** 2
            if gain_lo > gain_hi + 1e-12:
                a2 = lo
            elif gain_hi > gain_lo + 1e-12:
                a2 = hi
            else:
                return False
        if abs(a2 - a2o) < 1e-8 * (a2 + a2o + 1e-8):
            return False
        # snap to the exact bound; a1 recomputed from the snapped value keeps
        # the equality constraint intact
        if a2 < 1e-10 * c:
            a2 = 0.0
        elif a2 > (1.0 - 1e-10) * c:
            a2 = c
        a1 = a1o + s * (a2o - a2)
        a1 = min(c, max(0.0, a1))
        d1 = a1 - a1o
        d2 = a2 - a2o
        b1 = b - e1 - y1 * d1 * k11 - y2 * d2 * k12
        b2 = b - e2 - y1 * d1 * k12 - y2 * d2 * k22
        if 1e-12 < a1 < c - 1e-12:
            b_new = b1
        elif 1e-12 < a2 < c - 1e-12:
            b_new = b2
        else:
            b_new = 0.5 * (b1 + b2)
        errors += y1 * d1 * k1 + y2 * d2 * k2 + (b_new - b)
        alpha[i1] = a1
        alpha[i2] = a2
        b = b_new
        return True

    if record_objective:
        trace.append(objective())

    pos = y > 0
    neg = ~pos
    while steps < max_steps:
        # maximal violating pair: the bias-free optimality gap is
        # max_{I_low} E - min_{I_up} E, where I_up collects rows whose
        # coefficient can still grow along +y and I_low along -y
        up = ((alpha < c - 1e-12) & pos) | ((alpha > 1e-12) & neg)
        low = ((alpha < c - 1e-12) & neg) | ((alpha > 1e-12) & pos)
        up &= ~stuck
        low &= ~stuck
        if not up.any() or not low.any():
            converged = not stuck.any()
            break
        up_e = np.where(up, errors, np.inf)
        low_e = np.where(low, errors, -np.inf)
        i1 = int(np.argmin(up_e))
        i2 = int(np.argmax(low_e))
        if low_e[i2] - up_e[i1] <= tol:
            converged = not stuck.any()
            break
        moved = take_step(i1, i2)
        if not moved:
            # walk alternates in seeded order; the pair gap guarantees some
            # partner admits progress unless numerics pin both ends
            for j in rng.permutation(n):
                j = int(j)
                if j != i1 and take_step(i1, j):
                    moved = True
                    break
        if moved:
            stuck[:] = False
            steps += 1
            if record_objective:
                trace.append(objective())
        else:
            stuck[i1] = True

    # recenter the bias mid-interval so per-row optimality holds at tol
    up = ((alpha < c - 1e-12) & pos) | ((alpha > 1e-12) & neg)
    low = ((alpha < c - 1e-12) & neg) | ((alpha > 1e-12) & pos)
    if up.any() and low.any():
        shift = -0.5 * (float(errors[up].min()) + float(errors[low].max()))
        b += shift
        errors += shift
    return alpha, b, converged, steps, trace


@dataclass(frozen=True)
class BinarySvm:
    """One trained class-pair machine; the decision sign votes for pos_class."""

    neg_class: int
    pos_class: int
    support_x: np.ndarray  # (m, p)
    alpha: np.ndarray  # (m,) in (0, C]
    sv_y: np.ndarray  # (m,) in {-1, +1}
    bias: float
    kernel: KernelSpec
    c: float
    converged: bool
    steps: int
    sv_index: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    objective_trace: tuple = ()

    @property
    def coef(self) -> np.ndarray:
        return self.alpha * self.sv_y

    def decision(self, x: np.ndarray) -> np.ndarray:
        return kernel_matrix(self.kernel, np.atleast_2d(x), self.support_x) @ self.coef + self.bias


@dataclass(frozen=True)
class SvmModel:
    class_count: int
    kernel: KernelSpec
    c: float
    tol: float
    binaries: tuple[BinarySvm, ...]

    @property
    def converged(self) -> bool:
        return all(bin_.converged for bin_ in self.binaries)

    def decision(self, x: np.ndarray) -> np.ndarray:
        """Binary decision values; only defined for two-class models."""
        if len(self.binaries) != 1:
            raise ValueError("decision values are defined for binary models; use predict")
        return self.binaries[0].decision(x)

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        n = x.shape[0]
        votes = np.zeros((n, self.class_count))
        magnitude = np.zeros((n, self.class_count))
        for bin_ in self.binaries:
            d = bin_.decision(x)
            winner = np.where(d > 0, bin_.pos_class, bin_.neg_class)
            rows = np.arange(n)
            votes[rows, winner] += 1.0
            magnitude[rows, winner] += np.abs(d)
        best = votes.max(axis=1, keepdims=True)
        cand = votes == best
        mag_masked = np.where(cand, magnitude, -np.inf)
        cand &= mag_masked == mag_masked.max(axis=1, keepdims=True)
        return np.argmax(cand, axis=1).astype(np.int64)  # first True = lowest class id

    def to_json(self) -> str:
        return json.dumps(
            {
                "class_count": self.class_count,
                "kernel": self.kernel.to_json_dict(),
                "C": self.c,
                "tol": self.tol,
                "binaries": [
                    {
                        "neg_class": bin_.neg_class,
                        "pos_class": bin_.pos_class,
                        "support_x": bin_.support_x.tolist(),
                        "alpha": bin_.alpha.tolist(),
                        "sv_y": bin_.sv_y.tolist(),
                        "bias": bin_.bias,
                        "converged": bin_.converged,
                        "steps": bin_.steps,
                        "sv_index": bin_.sv_index.tolist(),
                    }
                    for bin_ in self.binaries
                ],
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "SvmModel":
        obj = json.loads(text)
        kernel = KernelSpec.from_json_dict(obj["kernel"])
        binaries = tuple(
            BinarySvm(
                neg_class=o["neg_class"],
                pos_class=o["pos_class"],
                support_x=np.array(o["support_x"], dtype=np.float64),
                alpha=np.array(o["alpha"], dtype=np.float64),
                sv_y=np.array(o["sv_y"], dtype=np.float64),
                bias=o["bias"],
                kernel=kernel,
                c=obj["C"],
                converged=o["converged"],
                steps=o["steps"],
                sv_index=np.array(o["sv_index"], dtype=np.int64),
            )
            for o in obj["binaries"]
        )
        return cls(obj["class_count"], kernel, obj["C"], obj["tol"], binaries)


def svm_train(
    train: LabeledDataset,
    kernel: KernelSpec,
    c: float = 10.0,
    tol: float = 1e-3,
    max_passes: int = 100,
    seed: int = 0,
    cache_bytes: int = DEFAULT_CACHE_BYTES,
    record_objective: bool = False,
) -> SvmModel:
    """One-vs-one soft-margin training; at most ``max_passes * n`` pair steps
    per binary subproblem, with the convergence flag cleared when exhausted."""
    if c <= 0 or tol <= 0:
        raise ValueError("C and tol must be positive")
    present = np.unique(train.labels)
    if present.size < 2:
        raise ValueError("training set has a single class")
    kernel = kernel.resolve(train.p)
    binaries = []
    for neg, pos in combinations(present.tolist(), 2):
        rows = np.flatnonzero((train.labels == neg) | (train.labels == pos))
        x = train.features[rows]
        y = np.where(train.labels[rows] == pos, 1.0, -1.0)
        gram = _GramCache(x, kernel, cache_bytes)
        rng = spawn_rng(seed, "svm-pair", neg, pos)
        alpha, bias, converged, steps, trace = _smo(
            gram, y, c, tol, max_passes * rows.size, rng, record_objective
        )
        sv = np.flatnonzero(alpha > 0)
        if sv.size == 0:
            raise RuntimeError("no support vectors after training (degenerate subproblem)")
        binaries.append(
            BinarySvm(
                neg_class=int(neg),
                pos_class=int(pos),
                support_x=np.ascontiguousarray(x[sv]),
                alpha=alpha[sv],
                sv_y=y[sv],
                bias=float(bias),
                kernel=kernel,
                c=c,
                converged=converged,
                steps=steps,
                sv_index=rows[sv],
                objective_trace=tuple(trace),
            )
        )
    return SvmModel(train.class_count, kernel, c, tol, tuple(binaries))


def svm_decision(model: SvmModel, x: np.ndarray) -> float | np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = model.decision(x)
    return float(out[0]) if x.ndim == 1 else out


def max_kkt_violation(model: SvmModel, train: LabeledDataset) -> float:
    """Largest soft-margin optimality violation over all training rows."""
    worst = 0.0
    for bin_ in model.binaries:
        rows = np.flatnonzero((train.labels == bin_.neg_class) | (train.labels == bin_.pos_class))
        y = np.where(train.labels[rows] == bin_.pos_class, 1.0, -1.0)
        f = bin_.decision(train.features[rows])
        alpha = np.zeros(rows.size)
        pos = np.searchsorted(rows, bin_.sv_index)
        alpha[pos] = bin_.alpha
        margins = y * f
        viol = np.zeros(rows.size)
        free = (alpha > 1e-12) & (alpha < bin_.c - 1e-12)
        viol[alpha <= 1e-12] = np.maximum(0.0, 1.0 - margins[alpha <= 1e-12])
        viol[free] = np.abs(1.0 - margins[free])
        viol[alpha >= bin_.c - 1e-12] = np.maximum(0.0, margins[alpha >= bin_.c - 1e-12] - 1.0)
        worst = max(worst, float(viol.max()))
    return worst


@dataclass(frozen=True)
class KnnModel:
    train_x: np.ndarray
    train_y: np.ndarray
    class_count: int
    k: int

    def predict(self, x: np.ndarray) -> np.ndarray:
        return _knn_vote(self.train_x, self.train_y, self.class_count, np.atleast_2d(x), self.k)


def _knn_vote(train_x, train_y, class_count, x, k, chunk=512):
    out = np.empty(x.shape[0], dtype=np.int64)
    tx_sq = np.einsum("ij,ij->i", train_x, train_x)
    for start in range(0, x.shape[0], chunk):
        xs = x[start : start + chunk]
        d = tx_sq[None, :] - 2.0 * (xs @ train_x.T)
        d += np.einsum("ij,ij->i", xs, xs)[:, None]
        # stable sort: equal distances resolve to the lower row index
        near = np.argsort(d, axis=1, kind="stable")[:, :k]
        votes = train_y[near]
        for i in range(votes.shape[0]):
            counts = np.bincount(votes[i], minlength=class_count)
            out[start + i] = int(np.argmax(counts))  # argmax tie = lowest class id
    return out


def knn_predict(train: LabeledDataset, x: np.ndarray, k: int) -> np.ndarray:
    if not 1 <= k <= train.n:
        raise ValueError("k must satisfy 1 <= k <= n")
    return _knn_vote(train.features, train.labels, train.class_count, np.atleast_2d(x), k)


def knn_classify(train: LabeledDataset, x: np.ndarray, k: int) -> int:
    """Majority label among the k nearest training rows (Euclidean)."""
    return int(knn_predict(train, np.asarray(x, dtype=np.float64)[None, :], k)[0])


@dataclass(frozen=True)
class EvalResult:
    error_rate: float
    confusion: np.ndarray  # (J, J) counts, true class by row
    per_class_accuracy: np.ndarray

    @property
    def accuracy(self) -> float:
        return 1.0 - self.error_rate


def evaluate(predict, test: LabeledDataset) -> EvalResult:
    """Exact 0-1 error of ``predict`` (features -> class ids) on the test set."""
    if test.n < 1:
        raise ValueError("test set is empty")
    pred = np.asarray(predict(test.features), dtype=np.int64)
    j = test.class_count
    confusion = np.zeros((j, j), dtype=np.int64)
    np.add.at(confusion, (test.labels, pred), 1)
    correct = np.trace(confusion)
    row_totals = confusion.sum(axis=1)
    per_class = np.where(row_totals > 0, np.diag(confusion) / np.maximum(row_totals, 1), 1.0)
    return EvalResult(
        error_rate=1.0 - correct / test.n,
        confusion=confusion,
        per_class_accuracy=per_class,
    )


@dataclass(frozen=True)
class ClassifierConfig:
    """Which learner to train and with what hyperparameters."""

    algorithm: str = "svm"  # "svm" | "knn"
    kernel: KernelSpec = KernelSpec.rbf()
    c: float = 10.0
    tol: float = 1e-3
    max_passes: int = 100
    k: int | None = None  # knn; None resolves to floor(sqrt(n))

    def __post_init__(self):
        if self.algorithm not in ("svm", "knn"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")

    def fit(self, train: LabeledDataset, seed: int = 0):
        if self.algorithm == "svm":
            return svm_train(
                train, self.kernel, c=self.c, tol=self.tol, max_passes=self.max_passes, seed=seed
            )
        k = self.k if self.k is not None else max(1, int(np.sqrt(train.n)))
        k = min(k, train.n)
        return KnnModel(train.features, train.labels, train.class_count, k)

    def to_json_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "kernel": self.kernel.to_json_dict(),
            "C": self.c,
            "tol": self.tol,
            "max_passes": self.max_passes,
            "k": self.k,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ClassifierConfig":
        return cls(
            algorithm=obj.get("algorithm", "svm"),
            kernel=KernelSpec.from_json_dict(obj["kernel"]) if "kernel" in obj else KernelSpec.rbf(),
            c=obj.get("C", 10.0),
            tol=obj.get("tol", 1e-3),
            max_passes=obj.get("max_passes", 100),
            k=obj.get("k"),
        )
