"""Training-set contamination: empirical generators and the worst-case analysis.

Empirical side: seven contamination kinds acting on a dataset — label flips
confined to one class (c0) or spread over all (c1), feature swapping between
rows (c2), and feature replacement from a Gaussian (cg) or heavy-tailed
Cauchy (cc) source, each with a variant whose center is scaled by 100
(cg100, cc100).  Every kind alters exactly round(epsilon * n) rows, chosen
without replacement, so the realized contamination rate is deterministic.

Analytic side: for a 1-d mixture oracle, the replacement distribution and
flipped labeling that make the asymptotic excess-risk bound eps/(1-eps)
tight, plus the exact posterior margin under any replacement mixture and a
Monte Carlo estimator of the resulting excess risk.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .rng import derive_seed
from .synthgen import MixtureOracle, counter_rng, ridge_adjust

__all__ = [
    "CONTAMINATION_KINDS",
    "ContaminationSpec",
    "WorstCaseContamination",
    "contaminate",
    "sample_heavy_tail",
    "worst_case_contamination",
    "contaminated_posterior",
    "excess_risk_contaminated_bayes",
]

CONTAMINATION_KINDS = ("c0", "c1", "c2", "cg", "cc", "cg100", "cc100")

LABEL_KINDS = ("c0", "c1")
FEATURE_KINDS = ("c2", "cg", "cc", "cg100", "cc100")

# |posterior margin| at or below this is treated as an exact tie and resolved
# against the clean-optimal rule (the worst admissible tie-break); the sharp
# construction sits exactly on this tie.
TIE_TOL = 1e-12


@dataclass(frozen=True)
class ContaminationSpec:
    """Kind + rate + seed; fully determines a contamination draw."""

    kind: str
    epsilon: float
    seed: int
    target_class: int | None = None

    def __post_init__(self):
        if self.kind not in CONTAMINATION_KINDS:
            raise ValueError(f"unknown contamination kind {self.kind!r}")
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError("epsilon must be in [0, 1)")
        if (self.kind == "c0") != (self.target_class is not None):
            raise ValueError("target_class is required for c0 and forbidden otherwise")

    def to_json(self) -> str:
        obj = {"kind": self.kind, "epsilon": self.epsilon, "seed": self.seed}
        if self.target_class is not None:
            obj["target_class"] = self.target_class
        return json.dumps(obj, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ContaminationSpec":
        obj = json.loads(text)
        return cls(
            kind=obj["kind"],
            epsilon=float(obj["epsilon"]),
            seed=int(obj["seed"]),
            target_class=obj.get("target_class"),
        )


def contaminate(dataset: LabeledDataset, spec: ContaminationSpec) -> tuple[LabeledDataset, np.ndarray]:
    """Apply the contamination draw; returns the new dataset and the altered-row mask.

    Label kinds leave the feature matrix bit-identical; feature kinds leave
    the label vector bit-identical.
    """
    n = dataset.n
    rng = counter_rng(derive_seed("contaminate", spec.kind, repr(spec.epsilon), spec.seed))
    if spec.kind == "c0":
        pool = np.flatnonzero(dataset.labels == spec.target_class)
        if pool.size == 0:
            raise ValueError(f"target class {spec.target_class} has no rows")
        m = int(round(spec.epsilon * pool.size))
        chosen = np.sort(rng.choice(pool, size=m, replace=False))
    else:
        if dataset.class_count < 2 and spec.kind in LABEL_KINDS:
            raise ValueError("label contamination needs at least two classes")
        m = int(round(spec.epsilon * n))
        if m > n:
            raise ValueError("epsilon * n rounds above n")
        chosen = np.sort(rng.choice(n, size=m, replace=False))

    mask = np.zeros(n, dtype=bool)
    mask[chosen] = True
    if m == 0:
        return dataset, mask

    if spec.kind in LABEL_KINDS:
        labels = dataset.labels.copy()
        # uniform over the other J-1 classes
        shift = rng.integers(1, dataset.class_count, size=m)
        labels[chosen] = (labels[chosen] + shift) % dataset.class_count
        return dataset.with_arrays(labels=labels), mask

    features = dataset.features.copy()
    if spec.kind == "c2":
        # swap partner drawn over all other rows, original values copied
        partner = rng.integers(0, n - 1, size=m)
        partner += partner >= chosen  # shift past self
        features[chosen] = dataset.features[partner]
    else:
        features[chosen] = _replacement_rows(dataset.features, spec.kind, m, rng)
    return dataset.with_arrays(features=features), mask


def _replacement_rows(x: np.ndarray, kind: str, m: int, rng: np.random.Generator) -> np.ndarray:
    """Replacement feature rows for cg/cc and their center-scaled variants."""
    sigma = _empirical_cov(x)
    if kind in ("cg", "cg100"):
        center = x.mean(axis=0)
        if kind == "cg100":
            center = 100.0 * center
        chol = np.linalg.cholesky(ridge_adjust(sigma))
        return center + rng.standard_normal((m, x.shape[1])) @ chol.T
    # heavy tail: per-coordinate center uniform inside the data's bounding box
    lo = x.min(axis=0)
    hi = x.max(axis=0)
    center = lo + rng.random(x.shape[1]) * (hi - lo)
    if kind == "cc100":
        center = 100.0 * center
    return _heavy_tail_with_rng(center, sigma, m, rng)


def _empirical_cov(x: np.ndarray) -> np.ndarray:
    if x.shape[0] < 2:
        return np.eye(x.shape[1])
    return np.cov(x, rowvar=False).reshape(x.shape[1], x.shape[1])


def sample_heavy_tail(mu, sigma, n: int, seed: int) -> np.ndarray:
    """Multivariate Cauchy rows: mu + N(0, Sigma) / sqrt(chi^2_1), per row.

    The divisor is the square root of a Gamma(0.5, scale 2) draw, i.e. the
    absolute value of a standard normal, giving t with 1 degree of freedom.
    No variance-based normalization is applied; second moments diverge.
    """
    if n < 1:
        raise ValueError("n >= 1")
    return _heavy_tail_with_rng(np.asarray(mu, dtype=np.float64), np.asarray(sigma), n, counter_rng(seed))


def _heavy_tail_with_rng(mu: np.ndarray, sigma: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    p = mu.size
    chol = np.linalg.cholesky(ridge_adjust(sigma))
    z = rng.standard_normal((n, p)) @ chol.T
    w = np.sqrt(rng.gamma(0.5, 2.0, size=n))
    zero = ~(w > 0)
    while np.any(zero):  # probability-zero guard
        w[zero] = np.sqrt(rng.gamma(0.5, 2.0, size=int(zero.sum())))
        zero = ~(w > 0)
    return mu + z / w[:, None]


@dataclass(frozen=True)
class WorstCaseContamination:
    """Replacement mixture that attains the excess-risk bound with equality.

    At contamination rate ``epsilon_star`` the replacement density
    concentrates where the clean posterior margin is large and its labeling
    opposes the clean-optimal rule everywhere, driving the contaminated
    posterior margin to an exact tie.
    """

    oracle: MixtureOracle
    bayes_risk: float
    epsilon_star: float
    grid: np.ndarray
    h_grid: np.ndarray

    def h_density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        eta = self.oracle.eta(x[:, None])
        g = self.oracle.density(x[:, None])
        return 2.0 * np.abs(eta) * g / (1.0 - 2.0 * self.bayes_risk)

    def eta_h(self, x) -> np.ndarray:
        """Label margin of the replacement source: +0.5 exactly where eta < 0."""
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        eta = self.oracle.eta(x[:, None])
        return np.where(eta < 0, 0.5, -0.5)

    def sample_h(self, n: int, seed: int) -> np.ndarray:
        """Inverse-CDF draws of the replacement density on the quadrature grid."""
        cdf = np.concatenate([[0.0], np.cumsum(
            0.5 * (self.h_grid[1:] + self.h_grid[:-1]) * np.diff(self.grid)
        )])
        cdf /= cdf[-1]
        u = counter_rng(seed).random(n)
        return np.interp(u, cdf, self.grid)


def worst_case_contamination(oracle: MixtureOracle, n_quad: int = 4096) -> WorstCaseContamination:
    """Build the bound-attaining replacement pair for a 1-d oracle.

    The optimal risk is computed by trapezoid quadrature of
    0.5 - integral |eta| g; the critical rate is (0.5 - R) / (1 - R).
    """
    if oracle.dim != 1:
        raise ValueError("worst-case construction requires a 1-d oracle")
    sd = math.sqrt(float(oracle.sigma[0, 0]))
    lo = min(oracle.mu0[0], oracle.mu1[0]) - 8.0 * sd
    hi = max(oracle.mu0[0], oracle.mu1[0]) + 8.0 * sd
    grid = np.linspace(lo, hi, n_quad)
    eta = oracle.eta(grid[:, None])
    g = oracle.density(grid[:, None])
    mean_abs_eta = np.trapezoid(np.abs(eta) * g, grid)
    r_star = 0.5 - float(mean_abs_eta)
    if r_star >= 0.5 - 1e-6:
        raise ValueError("degenerate problem: optimal risk is 0.5")
    eps_star = (0.5 - r_star) / (1.0 - r_star)
    h_grid = 2.0 * np.abs(eta) * g / (1.0 - 2.0 * r_star)
    return WorstCaseContamination(
        oracle=oracle,
        bayes_risk=r_star,
        epsilon_star=eps_star,
        grid=grid,
        h_grid=h_grid,
    )


def contaminated_posterior(oracle: MixtureOracle, h_density, eta_h, epsilon: float, x) -> np.ndarray:
    """Posterior margin under the replacement mixture (1-eps) G + eps H.

    Evaluated as [(1-eps) g eta + eps h eta_H] / [(1-eps) g + eps h], which
    equals (1-alpha) eta + alpha eta_H for alpha = eps h / ((1-eps) g + eps h).
    """
    if not 0.0 <= epsilon < 1.0:
        raise ValueError("epsilon must be in [0, 1)")
    if oracle.dim == 1:
        pts = np.asarray(x, dtype=np.float64).reshape(-1)
        rows = pts[:, None]
    else:
        pts = np.atleast_2d(np.asarray(x, dtype=np.float64))
        rows = pts
    g = np.asarray(oracle.density(rows), dtype=np.float64)
    h = np.asarray(h_density(pts), dtype=np.float64).reshape(-1)
    denom = (1.0 - epsilon) * g + epsilon * h
    if np.any(denom <= 0):
        raise ValueError("point outside the support of both densities")
    eta = oracle.eta(rows)
    eh = np.asarray(eta_h(pts), dtype=np.float64).reshape(-1)
    return ((1.0 - epsilon) * g * eta + epsilon * h * eh) / denom


def excess_risk_contaminated_bayes(
    oracle: MixtureOracle, h_density, eta_h, epsilon: float, n_mc: int, seed: int
) -> float:
    """Monte Carlo of 2 E[|eta| ; the contaminated rule disagrees with the clean one].

    This equals the risk of the contaminated-optimal rule minus the clean
    optimal risk.  Exact ties of the contaminated margin (|margin| <= TIE_TOL)
    are counted as disagreements: the tie is resolved adversarially, which is
    the case that attains the eps/(1-eps) bound.
    """
    if n_mc < 1:
        raise ValueError("n_mc >= 1")
    total = 0.0
    done = 0
    shard = 0
    while done < n_mc:
        m = min(1 << 18, n_mc - done)
        x, _ = oracle.sample(m, derive_seed(seed, "excess-shard", shard))
        xv = x[:, 0] if oracle.dim == 1 else x
        eta = oracle.eta(x)
        eta_t = contaminated_posterior(oracle, h_density, eta_h, epsilon, xv)
        flipped = (eta * eta_t < 0) | ((np.abs(eta_t) <= TIE_TOL) & (np.abs(eta) > TIE_TOL))
        total += float(np.sum(2.0 * np.abs(eta) * flipped))
        done += m
        shard += 1
    return total / n_mc
