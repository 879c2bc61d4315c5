"""Closed-form loss bounds and the empirical domain-divergence estimator.

The core quantity is the asymptotic excess-risk bound eps/(1-eps) for a
classifier trained under contamination rate eps, its multi-class extension
weighted by the class distribution, and the critical rate at which the bound
is attained.  For comparison, the finite-sample domain-adaptation bound built
from a VC complexity term and an empirical divergence between unlabeled
samples is also provided.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .classifiers import ClassifierConfig, evaluate
from .data import LabeledDataset
from .rng import derive_seed, rng_from

__all__ = [
    "BoundReport",
    "two_class_bound",
    "multi_class_bound",
    "critical_epsilon",
    "ben_david_bound",
    "estimate_h_delta_h",
]


def two_class_bound(epsilon: float) -> float:
    """Excess-risk bound eps / (1 - eps) for two classes."""
    if not 0.0 <= epsilon < 1.0:
        raise ValueError("epsilon must be in [0, 1)")
    return epsilon / (1.0 - epsilon)


def multi_class_bound(epsilon: float, weights) -> float:
    """Multi-class extension: (eps/(1-eps)) * sum of tail-weight powers.

    With descending class weights w_1 >= ... >= w_J summing to 1 and
    a = 1 - eps/(1-eps), the series is
    1 + (w_2+...+w_J) a + ... + (w_{J-1}+w_J) a^(J-2);
    for J = 2 only the leading 1 remains and the two-class bound is returned.
    """
    if not 0.0 <= epsilon < 0.5:
        raise ValueError("epsilon must be in [0, 0.5) for the multi-class bound")
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size < 2:
        raise ValueError("weights must be a vector of length >= 2")
    if np.any(np.diff(w) > 1e-12):
        raise ValueError("weights must be sorted descending")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must sum to 1")
    base = two_class_bound(epsilon)
    a = 1.0 - base
    j = w.size
    tail = np.cumsum(w[::-1])[::-1]  # tail[i] = w_i + ... + w_J (0-based)
    series = 1.0 + sum(tail[i] * a ** i for i in range(1, j - 1))
    return base * series


def critical_epsilon(bayes_risk: float) -> float:
    """Contamination rate at which the two-class bound is attained exactly."""
    if not 0.0 <= bayes_risk < 0.5:
        raise ValueError("optimal risk must be in [0, 0.5)")
    return (0.5 - bayes_risk) / (1.0 - bayes_risk)


def ben_david_bound(
    d_hat: float, vc_dim: int, m_prime: int, delta: float, lam: float
) -> float:
    """Finite-sample domain-adaptation bound:
    d_hat/2 + 4 sqrt((2 d log(2 m') + log(2/delta)) / m') + lambda."""
    if not 0.0 <= d_hat <= 2.0:
        raise ValueError("d_hat must be in [0, 2]")
    if vc_dim < 1 or m_prime < 1:
        raise ValueError("vc_dim and m_prime must be positive integers")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    if lam < 0.0:
        raise ValueError("lambda must be >= 0")
    complexity = 4.0 * math.sqrt(
        (2.0 * vc_dim * math.log(2.0 * m_prime) + math.log(2.0 / delta)) / m_prime
    )
    return 0.5 * d_hat + complexity + lam


@dataclass(frozen=True)
class BoundReport:
    epsilon: float
    two_class: float
    multi_class: float | None = None
    ben_david: float | None = None
    d_hat: float | None = None
    vc_dim: int | None = None
    m_prime: int | None = None
    delta: float | None = None
    lam: float | None = None

    def to_json_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "two_class_bound": self.two_class,
            "multi_class_bound": self.multi_class,
            "ben_david_bound": self.ben_david,
            "d_hat": self.d_hat,
            "vc_dim": self.vc_dim,
            "m_prime": self.m_prime,
            "delta": self.delta,
            "lambda": self.lam,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)


def estimate_h_delta_h(
    source_features: np.ndarray,
    target_features: np.ndarray,
    probe: ClassifierConfig | None = None,
    seed: int = 0,
) -> float:
    """Domain-discrimination proxy for the divergence between two unlabeled samples.

    Source rows get label 0, target rows label 1; a probe classifier is
    trained on a stratified half and scored on the held-out half.  An error of
    0.5 (indistinguishable) gives 0, an error of 0 (perfectly separable) gives 2.
    """
    source = np.atleast_2d(np.asarray(source_features, dtype=np.float64))
    target = np.atleast_2d(np.asarray(target_features, dtype=np.float64))
    if source.shape[0] < 2 or target.shape[0] < 2:
        raise ValueError("both samples need at least two rows")
    if probe is None:
        probe = ClassifierConfig(algorithm="knn")
    rng = rng_from(derive_seed(seed, "h-delta-h"))
    halves = {"train": [], "held": []}
    for domain, x in enumerate((source, target)):
        perm = rng.permutation(x.shape[0])
        cut = x.shape[0] // 2
        halves["train"].append((x[perm[:cut]], domain))
        halves["held"].append((x[perm[cut:]], domain))

    def stack(parts):
        feats = np.vstack([x for x, _ in parts])
        labels = np.concatenate([np.full(x.shape[0], d, dtype=np.int64) for x, d in parts])
        return LabeledDataset(feats, labels, class_count=2)

    train = stack(halves["train"])
    held = stack(halves["held"])
    model = probe.fit(train, seed=derive_seed(seed, "h-delta-h-probe"))
    err = evaluate(model.predict, held).error_rate
    d_hat = 2.0 * (1.0 - 2.0 * min(err, 1.0 - err))
    return float(min(2.0, max(0.0, d_hat)))
