"""Domain types: datasets, priors, variational posterior state, estimates.

All value types validate their invariants on construction and are intended
to be treated as immutable; the posterior state is rebuilt (not mutated)
by the inference engine on every update cycle.
"""

from dataclasses import dataclass, field

import numpy as np

from .specfun import InvertedDirichletParams

__all__ = [
    "PositiveDataset",
    "PriorConfig",
    "VariationalPosterior",
    "MixtureEstimate",
    "ElboTrace",
    "stick_breaking_weights",
    "posterior_point_estimates",
]


@dataclass(frozen=True)
class PositiveDataset:
    """N observations of D strictly positive reals.

    The trailing augmented coordinate x_{n,D+1} = 1 used by the inference
    equations is a bookkeeping convention applied internally by the engine;
    it is never stored here.
    """

    values: np.ndarray = field()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError("values must be a non-empty N x D matrix")
        if not np.all(np.isfinite(values)) or np.any(values <= 0.0):
            raise ValueError("every dataset entry must be strictly positive and finite")
        object.__setattr__(self, "values", values)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class PriorConfig:
    """Truncation level, prior hyperparameters and convergence controls.

    Defaults reproduce the non-informative setting used throughout the
    synthetic experiments: truncation 15, shape hyperpriors 1, rate
    hyperpriors 0.005, pruning of weights below 1e-5.
    """

    truncation_M: int = 15
    s0: float = 1.0
    t0: float = 0.005
    u0: float = 1.0
    v0: float = 0.005
    max_iterations: int = 500
    elbo_rel_tolerance: float = 1e-6
    prune_threshold: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if int(self.truncation_M) != self.truncation_M or self.truncation_M < 2:
            raise ValueError("truncation_M must be an integer >= 2")
        for name in ("s0", "t0", "u0", "v0", "elbo_rel_tolerance"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be strictly positive and finite")
        if not (0.0 < self.prune_threshold < 1.0):
            raise ValueError("prune_threshold must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")


@dataclass(frozen=True)
class VariationalPosterior:
    """Fully factorised variational posterior state.

    Attributes
    ----------
    r : ndarray, shape (N, M)
        Responsibilities; each row is nonnegative and sums to one.
    g_star, h_star : ndarray, shape (M,)
        Beta posterior parameters of the stick proportions.
    s_star, t_star : ndarray, shape (M,)
        Gamma posterior parameters of the stick concentrations.
    u_star, v_star : ndarray, shape (M, D+1)
        Gamma posterior parameters of the component concentrations.
    """

    r: np.ndarray
    g_star: np.ndarray
    h_star: np.ndarray
    s_star: np.ndarray
    t_star: np.ndarray
    u_star: np.ndarray
    v_star: np.ndarray

    @property
    def n_components(self):
        return self.g_star.size


@dataclass(frozen=True)
class MixtureEstimate:
    """Pruned point-estimate mixture: weights and component concentrations."""

    weights: np.ndarray
    components: tuple

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        components = tuple(self.components)
        if weights.ndim != 1 or weights.size != len(components):
            raise ValueError("weights and components must have equal length")
        if np.any(weights <= 0.0) or np.any(weights > 1.0):
            raise ValueError("weights must lie in (0, 1]")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1 within 1e-12")
        dims = {c.alpha.size for c in components}
        if len(dims) != 1:
            raise ValueError("all components must share one parameter length")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "components", components)

    @property
    def n_components(self):
        return self.weights.size

    @property
    def alphas(self):
        """Component concentrations stacked into a K x (D+1) matrix."""
        return np.stack([c.alpha for c in self.components])


@dataclass(frozen=True)
class ElboTrace:
    """Per-iteration surrogate objective values, indexed from 1."""

    iterations: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        iterations = np.asarray(self.iterations, dtype=int)
        values = np.asarray(self.values, dtype=float)
        if iterations.shape != values.shape or iterations.ndim != 1:
            raise ValueError("iterations and values must be equal-length vectors")
        if iterations.size and (iterations[0] != 1 or np.any(np.diff(iterations) <= 0)):
            raise ValueError("iteration indices must increase strictly from 1")
        object.__setattr__(self, "iterations", iterations)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.iterations.size


def stick_breaking_weights(lambda_means):
    """Map stick proportions to mixture weights.

    weight_m = lambda_m * prod_{l<m} (1 - lambda_l).  The result is a
    sub-probability vector in general; it sums to one exactly when the
    final proportion equals 1 (the truncation convention).

    Parameters
    ----------
    lambda_means : array_like, shape (M,)
        Values in (0, 1].
    """
    lam = np.asarray(lambda_means, dtype=float)
    if lam.ndim != 1 or lam.size < 1:
        raise ValueError("lambda_means must be a non-empty vector")
    if np.any(lam <= 0.0) or np.any(lam > 1.0) or not np.all(np.isfinite(lam)):
        raise ValueError("stick proportions must lie in (0, 1]")
    remaining = np.concatenate(([1.0], np.cumprod(1.0 - lam[:-1])))
    return lam * remaining


def posterior_point_estimates(post):
    """Point estimates (weights, concentrations) from a posterior state.

    The stick proportion means are the Beta posterior means g*/(g*+h*)
    and the concentration estimates the Gamma posterior means u*/v*.  The
    weights are a sub-probability vector (the truncated stick keeps a tail
    remainder of order 1e-4); pruning and the subsequent renormalisation
    to unit l1 norm restore an exact probability vector.  Forcing the
    final stick proportion to 1 instead would hand that whole remainder
    to the last component, which would then always survive pruning.

    Returns
    -------
    (ndarray shape (M,), ndarray shape (M, D+1))
    """
    lam = post.g_star / (post.g_star + post.h_star)
    pi_hat = stick_breaking_weights(lam)
    alpha_hat = post.u_star / post.v_star
    return pi_hat, alpha_hat


def build_estimate(pi_hat, alpha_hat, prune_threshold):
    """Prune, renormalise and canonically order a point-estimate mixture.

    Components with weight <= ``prune_threshold`` are dropped, surviving
    weights are renormalised to unit l1 norm, and survivors are sorted by
    descending weight (ties broken by the first concentration entry).
    """
    pi_hat = np.asarray(pi_hat, dtype=float)
    alpha_hat = np.asarray(alpha_hat, dtype=float)
    keep = np.flatnonzero(pi_hat > prune_threshold)
    weights = pi_hat[keep]
    weights = weights / weights.sum()
    alphas = alpha_hat[keep]
    order = np.lexsort((alphas[:, 0], -weights))
    weights = weights[order]
    alphas = alphas[order]
    components = tuple(InvertedDirichletParams(a) for a in alphas)
    return MixtureEstimate(weights=weights, components=components)
