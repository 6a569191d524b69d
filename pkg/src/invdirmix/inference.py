"""Coordinate-ascent variational inference for the truncated stick-breaking
mixture of inverted Dirichlet distributions.

The expected log normalising constant of the inverted Dirichlet has no
closed form under a factorised Gamma posterior; the engine replaces it by
a first-order lower bound anchored at the current posterior means (the
function is convex in the log concentrations, so the linearisation bounds
it from below for every posterior).  Maximising the resulting surrogate
objective gives closed-form updates for all four factor blocks.

The fitting loop records one surrogate value per accepted optimisation
round and never accepts a round that lowers it: conjugate blocks are
refit to self-consistency, component labels are reordered by descending
responsibility mass only when that helps, and converged states are
post-processed with delete moves (dissolve a low-mass component, let the
survivors re-converge, keep the result only if the objective improves)
to escape the locally optimal micro-clusters that plain coordinate
ascent cannot leave.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gammaln, polygamma, psi, xlogy

from .model import (
    ElboTrace,
    VariationalPosterior,
    build_estimate,
    posterior_point_estimates,
)
from .specfun import seed_stream

__all__ = [
    "ExpectationCache",
    "NumericalDivergenceError",
    "compute_expectations",
    "r_tilde",
    "update_responsibilities",
    "update_lambda_posterior",
    "update_phi_posterior",
    "update_alpha_posterior",
    "surrogate_elbo",
    "kmeans_init",
    "fit",
]


class NumericalDivergenceError(RuntimeError):
    """Raised when the surrogate objective becomes non-finite during a fit."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"non-finite objective at iteration {iteration}")


@dataclass(frozen=True)
class ExpectationCache:
    """Posterior moments consumed by the update equations.

    ``ln_lambda``/``ln_one_minus_lambda`` are Beta log-moments (both
    negative), ``phi_mean`` the Gamma means of the stick concentrations,
    and ``alpha_mean``/``ln_alpha`` the Gamma mean and log-moment of each
    component concentration (``ln_alpha`` < ln ``alpha_mean`` by Jensen).
    """

    ln_lambda: np.ndarray
    ln_one_minus_lambda: np.ndarray
    phi_mean: np.ndarray
    alpha_mean: np.ndarray
    ln_alpha: np.ndarray


def compute_expectations(post):
    """Moments of the current posterior needed by every update equation."""
    gh = post.g_star + post.h_star
    return ExpectationCache(
        ln_lambda=psi(post.g_star) - psi(gh),
        ln_one_minus_lambda=psi(post.h_star) - psi(gh),
        phi_mean=post.s_star / post.t_star,
        alpha_mean=post.u_star / post.v_star,
        ln_alpha=psi(post.u_star) - np.log(post.v_star),
    )


def _log_normalizer_bound(cache):
    """Lower bound on the expected log normaliser, one value per component.

    For each component the exact quantity is E[ln Gamma(sum a) -
    sum ln Gamma(a_d)]; the bound evaluates it at the posterior means and
    adds the tangent correction sum_d [Psi(sum E a) - Psi(E a_d)] * E a_d *
    (E ln a_d - ln E a_d).
    """
    a = cache.alpha_mean
    a_sum = a.sum(axis=1)
    exact_at_mean = gammaln(a_sum) - gammaln(a).sum(axis=1)
    slope = (psi(a_sum)[:, None] - psi(a)) * a
    correction = (slope * (cache.ln_alpha - np.log(a))).sum(axis=1)
    return exact_at_mean + correction


def r_tilde(cache, m):
    """Lower bound on component ``m``'s expected log normalising constant."""
    return float(_log_normalizer_bound(cache)[m])


def _stick_log_weights(cache):
    """Expected log stick weights: E ln lambda_m + sum_{l<m} E ln(1-lambda_l)."""
    cum = np.concatenate(([0.0], np.cumsum(cache.ln_one_minus_lambda[:-1])))
    return cache.ln_lambda + cum


def _log_rho(data, cache):
    """Unnormalised log responsibilities, shape (N, M)."""
    x = data.values
    a = cache.alpha_mean
    return (
        (_stick_log_weights(cache) + _log_normalizer_bound(cache))[None, :]
        + np.log(x) @ (a[:, :-1] - 1.0).T
        - np.outer(np.log1p(x.sum(axis=1)), a.sum(axis=1))
    )


def _normalize_rows(log_rho):
    row_max = log_rho.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(row_max)):
        raise NumericalDivergenceError(None, "non-finite responsibility row")
    r = np.exp(log_rho - row_max)
    r /= r.sum(axis=1, keepdims=True)
    return r


def update_responsibilities(data, cache):
    """Optimal responsibilities given the current moments.

    Normalisation happens in log space with per-row max subtraction; rows
    sum to one exactly up to rounding.
    """
    return _normalize_rows(_log_rho(data, cache))


def update_lambda_posterior(r, cache):
    """Beta posterior parameters of the stick proportions.

    g*_m = 1 + sum_n r_nm;  h*_m = E phi_m + sum_n sum_{j>m} r_nj.
    """
    counts = r.sum(axis=0)
    return 1.0 + counts, cache.phi_mean + _mass_after(counts)


def update_phi_posterior(cache, prior):
    """Gamma posterior parameters of the stick concentrations.

    s*_m = 1 + s0;  t*_m = t0 - E ln(1 - lambda_m); t* exceeds t0 because
    the Beta log-moment is negative.
    """
    m = cache.ln_one_minus_lambda.size
    return np.full(m, 1.0 + prior.s0), prior.t0 - cache.ln_one_minus_lambda


def update_alpha_posterior(data, r, cache, prior):
    """Gamma posterior parameters of the component concentrations.

    The shape update adds, per unit responsibility, the tangent slope of
    the log normaliser at the current means; the rate update subtracts the
    responsibility-weighted log-ratio statistics ln x_nd - ln(1 + sum x),
    with the augmented coordinate x_{n,D+1} = 1.  Both increments are
    nonnegative, so u* >= u0 and v* >= v0.
    """
    counts = r.sum(axis=0)
    u_star = prior.u0 + counts[:, None] * _bound_slope(cache.alpha_mean)
    v_star = prior.v0 - r.T @ _log_ratio_stats(data)
    return u_star, v_star


def surrogate_elbo(data, post, cache, prior):
    """Surrogate objective: expected log joint (with the normaliser bound)
    minus the entropies of the four factor blocks.

    All densities carry their full normalising constants, so with an empty
    dataset the value is the negative KL divergence from the posterior
    blocks to their priors.
    """
    return _surrogate_elbo_core(post, cache, prior, _log_rho(data, cache))


def _surrogate_elbo_core(post, cache, prior, log_rho):
    r = post.r
    ln_phi = psi(post.s_star) - np.log(post.t_star)

    energy_data = float((r * log_rho).sum())
    energy_lambda = float(
        (ln_phi + (cache.phi_mean - 1.0) * cache.ln_one_minus_lambda).sum()
    )
    m = post.n_components
    energy_phi = float(
        m * (prior.s0 * np.log(prior.t0) - gammaln(prior.s0))
        + ((prior.s0 - 1.0) * ln_phi - prior.t0 * cache.phi_mean).sum()
    )
    energy_alpha = float(
        post.u_star.size * (prior.u0 * np.log(prior.v0) - gammaln(prior.u0))
        + ((prior.u0 - 1.0) * cache.ln_alpha - prior.v0 * cache.alpha_mean).sum()
    )

    neg_entropy_z = float(xlogy(r, r).sum())
    neg_entropy_lambda = float(
        (
            gammaln(post.g_star + post.h_star)
            - gammaln(post.g_star)
            - gammaln(post.h_star)
            + (post.g_star - 1.0) * cache.ln_lambda
            + (post.h_star - 1.0) * cache.ln_one_minus_lambda
        ).sum()
    )
    neg_entropy_phi = float(
        (
            post.s_star * np.log(post.t_star)
            - gammaln(post.s_star)
            + (post.s_star - 1.0) * ln_phi
            - post.t_star * cache.phi_mean
        ).sum()
    )
    neg_entropy_alpha = float(
        (
            post.u_star * np.log(post.v_star)
            - gammaln(post.u_star)
            + (post.u_star - 1.0) * cache.ln_alpha
            - post.v_star * cache.alpha_mean
        ).sum()
    )

    return (
        energy_data
        + energy_lambda
        + energy_phi
        + energy_alpha
        - neg_entropy_z
        - neg_entropy_lambda
        - neg_entropy_phi
        - neg_entropy_alpha
    )


def kmeans_init(data, n_clusters, rng):
    """One-hot responsibilities from Lloyd's K-means on the raw data.

    Initial centers are distinct rows chosen by the seed stream from a
    lexicographically sorted copy of the data, so the result is invariant
    to row permutations of the input.  Ties in the nearest-center search
    break toward the lowest center index; the final labelling is
    canonicalised by ordering centers by descending cluster size (then
    lexicographically), which aligns the heaviest cells with the earliest
    stick positions.

    Parameters
    ----------
    data : PositiveDataset
    n_clusters : int
        Number of centers; requires N >= n_clusters.
    rng : numpy.random.Generator
    """
    x = data.values
    n = x.shape[0]
    if n < n_clusters:
        raise ValueError(f"need at least {n_clusters} observations, got {n}")

    order = np.lexsort(x.T[::-1])
    xs = x[order]
    centers = xs[rng.choice(n, size=n_clusters, replace=False)]

    labels = None
    for _ in range(100):
        d2 = ((xs[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for k in range(n_clusters):
            members = xs[labels == k]
            if members.size:
                centers[k] = members.mean(axis=0)

    sizes = np.bincount(labels, minlength=n_clusters)
    rank = np.lexsort(np.vstack((centers.T[::-1], -sizes)))
    centers = centers[rank]

    d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    assignment = d2.argmin(axis=1)
    r = np.zeros((n, n_clusters))
    r[np.arange(n), assignment] = 1.0
    return r


# -- fitting internals -------------------------------------------------------

_INNER_TOL = 1e-12
_INNER_MAX = 60
_STICK_MAX = 500


def _mass_after(counts):
    """Responsibility mass on components after each stick position."""
    return np.concatenate((np.cumsum(counts[::-1])[-2::-1], [0.0]))


def _bound_slope(alpha_mean):
    """Tangent slope of the log normaliser at the given means."""
    return (psi(alpha_mean.sum(axis=1))[:, None] - psi(alpha_mean)) * alpha_mean


def _log_ratio_stats(data):
    """Per-observation statistics ln x_nd - ln(1 + sum_d x_nd), augmented."""
    x = data.values
    log_x_aug = np.concatenate((np.log(x), np.zeros((x.shape[0], 1))), axis=1)
    return log_x_aug - np.log1p(x.sum(axis=1))[:, None]


def _solve_stick_blocks(counts, phi_mean, prior):
    """Jointly self-consistent Beta/Gamma stick blocks for fixed counts."""
    g_star = 1.0 + counts
    s_star = np.full(counts.size, 1.0 + prior.s0)
    after = _mass_after(counts)
    for _ in range(_STICK_MAX):
        h_star = phi_mean + after
        t_star = prior.t0 - (psi(h_star) - psi(g_star + h_star))
        new_phi_mean = s_star / t_star
        done = np.all(np.abs(new_phi_mean - phi_mean) <= 1e-13 * phi_mean)
        phi_mean = new_phi_mean
        if done:
            break
    h_star = phi_mean + after
    t_star = prior.t0 - (psi(h_star) - psi(g_star + h_star))
    return g_star, h_star, s_star, t_star


def _coordinate_roots(tau, a, v_star, c, u0):
    """Solve v a - u0 - c (tau - psi(a)) a = 0 per coordinate, by damped
    Newton.  ``tau`` is each component's fixed log-normaliser slope level;
    the derivative is strictly positive at the root, so Newton is safe
    once damped to at most a fivefold move per step.
    """
    for _ in range(60):
        psi_a = psi(a)
        g = v_star * a - u0 - c * (tau - psi_a) * a
        gp = v_star - c * tau + c * (psi_a + a * polygamma(1, a))
        ok = gp > 1e-12
        newton = a - g / np.where(ok, gp, 1.0)
        fallback = np.where(g < 0.0, a * 2.0, a * 0.5)
        new = np.where(ok, np.clip(newton, a * 0.2, a * 5.0), fallback)
        done = np.all(np.abs(new - a) <= 1e-13 * a)
        a = new
        if done:
            break
    return a


def _solve_alpha_block(counts, stats_weighted, anchor, prior):
    """Self-consistent concentration block for fixed responsibilities.

    The rate parameters are anchor-free; the shape parameters depend on
    the linearisation anchor, which the coordinate update moves to the new
    posterior mean.  Iterating that update directly mixes a fast
    per-coordinate mode with one near-unit-rate mode per component (the
    shared psi(sum) level), so the block is solved by splitting them:
    given each component's level tau the coordinates are independent
    Newton solves, and the scalar tau sequence is Aitken-accelerated.
    """
    v_star = prior.v0 - stats_weighted
    c = counts[:, None]
    a = anchor
    tau = psi(a.sum(axis=1, keepdims=True))
    for _ in range(_INNER_MAX):
        a = _coordinate_roots(tau, a, v_star, c, prior.u0)
        tau1 = psi(a.sum(axis=1, keepdims=True))
        a = _coordinate_roots(tau1, a, v_star, c, prior.u0)
        tau2 = psi(a.sum(axis=1, keepdims=True))
        if np.all(np.abs(tau2 - tau1) <= _INNER_TOL * np.maximum(1.0, np.abs(tau2))):
            tau = tau2
            break
        d1, d2 = tau1 - tau, tau2 - tau1
        denom = d2 - d1
        with np.errstate(divide="ignore", invalid="ignore"):
            accel = tau2 - d2 * d2 / denom
        use = np.isfinite(accel) & (np.abs(denom) > 1e-300)
        tau = np.where(use, accel, tau2)
    a = _coordinate_roots(tau, a, v_star, c, prior.u0)
    u_star = prior.u0 + c * _bound_slope(a)
    return u_star, v_star


@dataclass(frozen=True)
class _State:
    post: VariationalPosterior
    cache: ExpectationCache
    elbo: float
    log_rho: np.ndarray


def _refit_blocks(data, r, cache, prior, u_old=None, v_old=None):
    """Posterior with all conjugate blocks refit for given ``r``.

    With ``u_old``/``v_old`` the concentration block is kept frozen
    instead of refit (used to guard against rare objective decreases from
    moving the linearisation anchor).
    """
    counts = r.sum(axis=0)
    g, h, s, t = _solve_stick_blocks(counts, cache.phi_mean, prior)
    if u_old is None:
        stats = r.T @ _log_ratio_stats(data)
        u, v = _solve_alpha_block(counts, stats, cache.alpha_mean, prior)
    else:
        u, v = u_old, v_old
    post = VariationalPosterior(r=r, g_star=g, h_star=h, s_star=s, t_star=t, u_star=u, v_star=v)
    cache = compute_expectations(post)
    log_rho = _log_rho(data, cache)
    return _State(post, cache, _surrogate_elbo_core(post, cache, prior, log_rho), log_rho)


def _permute(cache, order):
    return ExpectationCache(
        ln_lambda=cache.ln_lambda[order],
        ln_one_minus_lambda=cache.ln_one_minus_lambda[order],
        phi_mean=cache.phi_mean[order],
        alpha_mean=cache.alpha_mean[order],
        ln_alpha=cache.ln_alpha[order],
    )


def _cycle(data, state, prior, r=None):
    """One accepted optimisation round from ``state``.

    Refreshes responsibilities, then tries, in order: blocks refit with
    component labels sorted by descending responsibility mass, refit in
    the current label order, and refit with the concentration block kept
    frozen.  The first variant that does not lower the objective wins; the
    frozen variant never lowers it (the other blocks are exact coordinate
    maximisations at a fixed linearisation anchor), so the accepted round
    is non-decreasing by construction.
    """
    cache = state.cache
    if r is None:
        r = _normalize_rows(state.log_rho)

    order = np.argsort(-r.sum(axis=0), kind="stable")
    candidates = []
    if not np.array_equal(order, np.arange(r.shape[1])):
        candidates.append((r[:, order], _permute(cache, order)))
    candidates.append((r, cache))

    best = None
    for r_c, cache_c in candidates:
        trial = _refit_blocks(data, r_c, cache_c, prior)
        if best is None or trial.elbo > best.elbo:
            best = trial
        if trial.elbo >= state.elbo:
            return best
    guarded = _refit_blocks(
        data, r, cache, prior,
        u_old=state.post.u_star, v_old=state.post.v_star,
    )
    return guarded if guarded.elbo > best.elbo else best


def _converge(data, state, prior, max_rounds, record=None, tol=None):
    """Run accepted rounds until the relative objective change is small."""
    if tol is None:
        tol = prior.elbo_rel_tolerance
    for _ in range(max_rounds):
        new = _cycle(data, state, prior)
        if not np.isfinite(new.elbo):
            raise NumericalDivergenceError(None)
        done = new.elbo != 0.0 and abs(new.elbo - state.elbo) / abs(new.elbo) < tol
        state = new
        if record is not None:
            record.append(state.elbo)
        if done:
            break
    return state


def _delete_move(data, state, prior, component):
    """Dissolve one component and let the survivors re-converge.

    Returns the re-converged trial state only when it beats the current
    objective by a material margin: the trial inherits whatever slow
    background drift plain cycling would also harvest, so gains below the
    drift bound (budget * tolerance * |objective|) say nothing about the
    move itself.  Abandons early when the objective is recovering too
    slowly to catch up within the trial budget.
    """
    budget = 150
    margin = budget * prior.elbo_rel_tolerance * abs(state.elbo) + 0.5
    log_rho = state.log_rho.copy()
    log_rho[:, component] = -np.inf
    trial = _cycle(data, state, prior, r=_normalize_rows(log_rho))
    history = [trial.elbo]
    for used in range(1, budget + 1):
        if trial.elbo > state.elbo + margin:
            break
        if used >= 12:
            rate = (history[-1] - history[-6]) / 5.0
            if rate * (budget - used) < state.elbo + margin - trial.elbo:
                return None
        trial = _cycle(data, trial, prior)
        history.append(trial.elbo)
    if trial.elbo <= state.elbo + margin:
        return None
    trial = _converge(data, trial, prior, budget)
    return trial if trial.elbo > state.elbo + margin else None


def fit(data, prior):
    """Run the full variational estimation loop.

    Responsibilities are initialised by K-means, the accepted optimisation
    rounds run until the relative objective change falls below
    ``prior.elbo_rel_tolerance``, and converged states are refined with
    objective-improving delete moves until none helps (all within
    ``prior.max_iterations`` recorded rounds).  Components whose estimated
    weight falls below ``prior.prune_threshold`` are then dropped and the
    surviving weights renormalised to unit l1 norm.

    Returns
    -------
    (MixtureEstimate, VariationalPosterior, ElboTrace)

    Raises
    ------
    NumericalDivergenceError
        If the objective becomes non-finite; carries the iteration index.
    """
    if data.n < prior.truncation_M:
        raise ValueError(
            f"need at least truncation_M={prior.truncation_M} observations, got {data.n}"
        )
    rng = seed_stream(prior.seed)
    r = kmeans_init(data, prior.truncation_M, rng)

    # Absorb the K-means labels before the first full round: the conjugate
    # blocks are fit to the one-hot responsibilities while the moments
    # still sit at their prior values.
    base = _prior_posterior(r, prior, data.dim)
    base_cache = compute_expectations(base)
    state = _State(base, base_cache, -np.inf, _log_rho(data, base_cache))
    state = _cycle(data, state, prior, r=r)

    values = [state.elbo]
    # Delete scans first run at a loosened tolerance: dissolving a dying
    # component outright replaces the long tail of cycles that would
    # starve it gradually.  The tight tolerance is only polished once no
    # delete move helps any more.
    loose_tol = max(prior.elbo_rel_tolerance, 1e-4)
    try:
        polishing = False
        while len(values) < prior.max_iterations:
            budget = prior.max_iterations - len(values)
            state = _converge(
                data, state, prior, budget, record=values,
                tol=prior.elbo_rel_tolerance if polishing else loose_tol,
            )
            if len(values) >= prior.max_iterations:
                break
            improved = False
            masses = state.post.r.sum(axis=0)
            for k in np.argsort(masses, kind="stable"):
                if masses[k] <= 0.5:
                    continue
                moved = _delete_move(data, state, prior, int(k))
                if moved is not None:
                    state = moved
                    values.append(state.elbo)
                    improved = True
                    break
            if improved:
                polishing = False
            elif polishing:
                break
            else:
                polishing = True
    except NumericalDivergenceError as exc:
        raise NumericalDivergenceError(len(values) + 1) from exc
    if not np.isfinite(values[-1]):
        raise NumericalDivergenceError(len(values))

    pi_hat, alpha_hat = posterior_point_estimates(state.post)
    estimate = build_estimate(pi_hat, alpha_hat, prior.prune_threshold)
    trace = ElboTrace(iterations=np.arange(1, len(values) + 1), values=np.array(values))
    return estimate, state.post, trace


def _prior_posterior(r, prior, dim):
    """Posterior state holding the prior blocks and the given responsibilities."""
    m = prior.truncation_M
    return VariationalPosterior(
        r=r,
        g_star=np.ones(m),
        h_star=np.full(m, prior.s0 / prior.t0),
        s_star=np.full(m, prior.s0),
        t_star=np.full(m, prior.t0),
        u_star=np.full((m, dim + 1), prior.u0),
        v_star=np.full((m, dim + 1), prior.v0),
    )
