"""Synthetic generators with closed-form posterior oracles and Monte Carlo risk.

The workhorse is a two-component Gaussian mixture with shared covariance: it
exposes the exact posterior margin eta(x) = P(Y=1 | X=x) - 0.5, which makes
the optimal decision rule and its risk available as ground truth.  Pattern
generators (four-class spiral split, nested squares) have deterministic
labels, so their optimal risk is zero by construction and no posterior oracle
is provided.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import LabeledDataset
from .rng import derive_seed

__all__ = [
    "MixtureOracle",
    "PatternKind",
    "FOUR_CLASS",
    "NESTED_SQUARE",
    "gen_gaussian_mixture",
    "gen_pattern",
    "mixture_posterior",
    "monte_carlo_risk",
    "bayes_decision",
]

_LOG_2PI = math.log(2.0 * math.pi)
_MC_CHUNK = 1 << 18


def counter_rng(seed: int) -> np.random.Generator:
    """Philox (counter-based) generator; streams are independent per seed."""
    return np.random.Generator(np.random.Philox(key=seed))


def ridge_adjust(sigma: np.ndarray) -> np.ndarray:
    """Symmetrize and add 1e-10 * trace/p to the diagonal so Cholesky succeeds."""
    sigma = np.asarray(sigma, dtype=np.float64)
    sigma = 0.5 * (sigma + sigma.T)
    p = sigma.shape[0]
    ridge = 1e-10 * np.trace(sigma) / p
    if not ridge > 0:
        ridge = 1e-12
    return sigma + ridge * np.eye(p)


@dataclass(frozen=True)
class MixtureOracle:
    """Two Gaussian components with shared covariance and prior P(Y=1)."""

    mu1: np.ndarray
    mu0: np.ndarray
    sigma: np.ndarray
    prior: float = 0.5
    chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mu1 = np.asarray(self.mu1, dtype=np.float64).ravel()
        mu0 = np.asarray(self.mu0, dtype=np.float64).ravel()
        if mu1.shape != mu0.shape:
            raise ValueError("component means must share a dimension")
        if not 0.0 < self.prior < 1.0:
            raise ValueError("prior must be in (0, 1)")
        sigma = ridge_adjust(self.sigma)
        if sigma.shape != (mu1.size, mu1.size):
            raise ValueError("covariance shape does not match the means")
        chol = np.linalg.cholesky(sigma)
        for arr in (mu1, mu0, sigma, chol):
            arr.setflags(write=False)
        object.__setattr__(self, "mu1", mu1)
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "chol", chol)

    @classmethod
    def symmetric(cls, mu, sigma, prior: float = 0.5) -> "MixtureOracle":
        mu = np.asarray(mu, dtype=np.float64)
        return cls(mu1=mu, mu0=-mu, sigma=sigma, prior=prior)

    @property
    def dim(self) -> int:
        return self.mu1.size

    def _log_component(self, x: np.ndarray, mu: np.ndarray) -> np.ndarray:
        # log N(x; mu, Sigma) through the cached Cholesky factor
        diff = np.atleast_2d(x) - mu
        sol = _solve_lower(self.chol, diff.T).T
        quad = np.einsum("ij,ij->i", sol, sol)
        logdet = 2.0 * np.log(np.diag(self.chol)).sum()
        return -0.5 * (self.dim * _LOG_2PI + logdet + quad)

    def log_density_class1(self, x) -> np.ndarray:
        return self._log_component(np.asarray(x, dtype=np.float64), self.mu1)

    def log_density_class0(self, x) -> np.ndarray:
        return self._log_component(np.asarray(x, dtype=np.float64), self.mu0)

    def density(self, x) -> np.ndarray:
        """Marginal feature density g(x) of the mixture."""
        l1 = self.log_density_class1(x) + math.log(self.prior)
        l0 = self.log_density_class0(x) + math.log(1.0 - self.prior)
        hi = np.maximum(l1, l0)
        return np.exp(hi) * (np.exp(l1 - hi) + np.exp(l0 - hi))

    def eta(self, x) -> np.ndarray:
        """Posterior margin P(Y=1 | X=x) - 0.5, computed in log space."""
        l1 = self.log_density_class1(x) + math.log(self.prior)
        l0 = self.log_density_class0(x) + math.log(1.0 - self.prior)
        d = l1 - l0
        # stable sigmoid: never overflows, never non-finite
        pos = d >= 0
        e = np.exp(-np.abs(d))
        post = np.where(pos, 1.0 / (1.0 + e), e / (1.0 + e))
        return post - 0.5

    def sample(self, n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
        if n < 1:
            raise ValueError("n >= 1")
        rng = counter_rng(seed)
        labels = (rng.random(n) < self.prior).astype(np.int64)
        z = rng.standard_normal((n, self.dim))
        x = z @ self.chol.T
        x += np.where(labels[:, None] == 1, self.mu1, self.mu0)
        return x, labels

    def to_json(self) -> str:
        return json.dumps(
            {
                "mu1": self.mu1.tolist(),
                "mu0": self.mu0.tolist(),
                "sigma": self.sigma.tolist(),
                "prior": self.prior,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "MixtureOracle":
        obj = json.loads(text)
        return cls(
            mu1=np.array(obj["mu1"]),
            mu0=np.array(obj["mu0"]),
            sigma=np.array(obj["sigma"]),
            prior=obj["prior"],
        )


def _solve_lower(lower: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Forward substitution L x = b for lower-triangular L (columns of b)."""
    p = lower.shape[0]
    if p == 1:
        return b / lower[0, 0]
    x = np.empty_like(b)
    for i in range(p):
        x[i] = (b[i] - lower[i, :i] @ x[:i]) / lower[i, i]
    return x


def gen_gaussian_mixture(
    p: int, mu: np.ndarray | None, seed_a: int, n: int, seed: int
) -> tuple[LabeledDataset, MixtureOracle]:
    """Balanced two-class mixture N(+mu, Sigma) / N(-mu, Sigma), Sigma = A^T A.

    Entries of A are i.i.d. uniform[0,1] drawn from ``seed_a``; the label of
    each row is its mixture component.
    """
    if p < 1 or n < 1:
        raise ValueError("p >= 1 and n >= 1")
    if mu is None:
        mu = np.full(p, 0.5)
    mu = np.asarray(mu, dtype=np.float64)
    if mu.size != p:
        raise ValueError("mu must have length p")
    a = counter_rng(seed_a).random((p, p))
    oracle = MixtureOracle.symmetric(mu, a.T @ a)
    x, y = oracle.sample(n, seed)
    return LabeledDataset(x, y, class_count=2), oracle


def mixture_posterior(oracle: MixtureOracle, x) -> float | np.ndarray:
    """Posterior margin of the oracle at x; scalar input gives a scalar back."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    out = oracle.eta(x)
    return float(out[0]) if x.ndim == 1 else out


def bayes_decision(oracle: MixtureOracle):
    """Decision function whose sign is the optimal rule for the oracle."""
    return oracle.eta


def sign(values: np.ndarray) -> np.ndarray:
    """+1 where positive, -1 otherwise (zero counts as -1)."""
    return np.where(np.asarray(values) > 0, 1.0, -1.0)


def monte_carlo_risk(
    oracle: MixtureOracle,
    decision,
    n_mc: int,
    seed: int,
    method: str = "direct",
) -> float:
    """Estimate the 0-1 risk of ``decision`` under the oracle's distribution.

    ``direct`` counts disagreements with sampled labels; ``lemma1`` averages
    0.5 - eta(X) * sign(decision(X)), the same expectation without using the
    label draws.  Both run over identical draws for a given seed.
    """
    if n_mc < 1:
        raise ValueError("n_mc >= 1")
    if method not in ("direct", "lemma1"):
        raise ValueError(f"unknown method {method!r}")
    total = 0.0
    done = 0
    shard = 0
    while done < n_mc:
        m = min(_MC_CHUNK, n_mc - done)
        x, y = oracle.sample(m, derive_seed(seed, "mc-shard", shard))
        values = np.asarray(decision(x), dtype=np.float64)
        if method == "direct":
            pred = (values > 0).astype(np.int64)
            total += float(np.sum(pred != y))
        else:
            total += float(np.sum(0.5 - oracle.eta(x) * sign(values)))
        done += m
        shard += 1
    return total / n_mc


@dataclass(frozen=True)
class PatternKind:
    """Deterministic label geometry on the unit square."""

    name: str  # "four_class" | "nested_square"
    ring_width: float = 0.125
    split_radius: float = 0.25
    spiral_turns: float = 1.0

    def __post_init__(self):
        if self.name not in ("four_class", "nested_square"):
            raise ValueError(f"unknown pattern {self.name!r}")

    @property
    def class_count(self) -> int:
        return 4 if self.name == "four_class" else 2


FOUR_CLASS = PatternKind("four_class")
NESTED_SQUARE = PatternKind("nested_square")


def pattern_labels(kind: PatternKind, points: np.ndarray) -> np.ndarray:
    """Label points in [0,1]^2 by the pattern's geometry (pure function)."""
    dx = points[:, 0] - 0.5
    dy = points[:, 1] - 0.5
    if kind.name == "nested_square":
        cheb = np.maximum(np.abs(dx), np.abs(dy))
        ring = np.floor(cheb / kind.ring_width).astype(np.int64)
        return ring % 2
    r = np.hypot(dx, dy)
    phi = np.arctan2(dy, dx)
    twist = phi + 2.0 * np.pi * kind.spiral_turns * (r / 0.5)
    arm = (np.mod(twist, 2.0 * np.pi) < np.pi).astype(np.int64)
    outer = (r >= kind.split_radius).astype(np.int64)
    return 2 * outer + arm


def gen_pattern(kind: PatternKind, n: int, seed: int) -> LabeledDataset:
    if n < 1:
        raise ValueError("n >= 1")
    points = counter_rng(seed).random((n, 2))
    return LabeledDataset(points, pattern_labels(kind, points), class_count=kind.class_count)
