"""Gibbs / Metropolis-Hastings sampler for the consensus posterior."""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .exceptions import ConfigurationError, InvalidInputError, NumericalError
from .model import ConsensusState, joint_roughness_matrix, null_space_projector, tau_order_ok
from .splines import _spline_parts, roughness_at

logger = logging.getLogger(__name__)

TAU_STEP_FRACTION = 0.1  # proposal sd for tau_i is this fraction of psi_i


@dataclass(frozen=True)
class SamplerConfig:
    n_iter: int = 4000
    burn_in: int = 2000
    thin: int = 1
    seed: int = 0
    store_covariances: bool = False

    def __post_init__(self):
        if self.n_iter < 1 or self.thin < 1 or self.burn_in < 0:
            raise ConfigurationError("n_iter and thin must be >= 1 and burn_in >= 0")
        if self.burn_in >= self.n_iter:
            raise ConfigurationError(f"burn_in ({self.burn_in}) must be below n_iter ({self.n_iter})")

    @property
    def n_kept(self):
        return len(range(self.burn_in, self.n_iter, self.thin))


def cholesky_with_jitter(A, what):
    """Lower Cholesky factor, retrying once with a small diagonal jitter."""
    try:
        return linalg.cholesky(A, lower=True, check_finite=False)
    except linalg.LinAlgError:
        jitter = 1e-10 * np.trace(A) / A.shape[0]
        logger.warning("%s: Cholesky failed, retrying with jitter %.3g", what, jitter)
        try:
            return linalg.cholesky(A + jitter * np.eye(A.shape[0]), lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise NumericalError(f"{what} is not positive definite") from exc


def _precision_parts(state, ys, joint, K, extended=False, null_precision=0.0):
    """Conditional precision of mu and the per-record data terms."""
    n = state.mu.size
    P = state.lambda0 * np.asarray(K)
    if null_precision > 0:
        P = P + null_precision * null_space_projector(state.tau)
    terms = []
    if extended:
        cols = np.concatenate(joint.incidence)
        L = cholesky_with_jitter(state.sigmas[0], "pooled covariance")
        G = np.zeros((cols.size, n))
        G[np.arange(cols.size), cols] = 1.0
        LiG = linalg.solve_triangular(L, G, lower=True)
        P = P + LiG.T @ LiG
        b = LiG.T @ linalg.solve_triangular(L, np.concatenate(ys), lower=True)
        terms.append(b)
    else:
        P = P.copy()
        for k, (yk, ix) in enumerate(zip(ys, joint.incidence)):
            L = cholesky_with_jitter(state.sigmas[k], f"covariance of record {k}")
            Sinv = linalg.cho_solve((L, True), np.eye(len(ix)))
            P[np.ix_(ix, ix)] += Sinv
            b = np.zeros(n)
            b[ix] = Sinv @ yk
            terms.append(b)
    return P, terms


def mu_conditional_moments(state, ys, joint, K, extended=False, null_precision=0.0):
    """Mean and covariance of the Gaussian full conditional of ``mu``."""
    P, terms = _precision_parts(state, ys, joint, K, extended, null_precision)
    L = cholesky_with_jitter(P, "conditional precision of mu")
    mean = linalg.cho_solve((L, True), np.sum(terms, axis=0))
    cov = linalg.cho_solve((L, True), np.eye(P.shape[0]))
    return mean, cov


def sample_mu_conditional(state, ys, joint, K, rng, extended=False, null_precision=0.0):
    """Exact draw of ``mu`` from its Gaussian full conditional."""
    P, terms = _precision_parts(state, ys, joint, K, extended, null_precision)
    L = cholesky_with_jitter(P, "conditional precision of mu")
    mean = linalg.cho_solve((L, True), np.sum(terms, axis=0))
    z = rng.standard_normal(mean.size)
    return mean + linalg.solve_triangular(L.T, z, lower=False)


def record_contribution_vectors(state, ys, joint, K, null_precision=0.0):
    """Per-record shares ``Sigma0 Sigma_k^{-1} y_k`` of the conditional mean.

    Returns an ``(m, n)`` array whose rows sum to the conditional mean of mu.
    """
    P, terms = _precision_parts(state, ys, joint, K, False, null_precision)
    L = cholesky_with_jitter(P, "conditional precision of mu")
    return linalg.cho_solve((L, True), np.column_stack(terms)).T


def sample_inv_wishart(df, scale, rng):
    """Draw from the inverse-Wishart with ``df`` degrees of freedom and scale matrix.

    Bartlett decomposition of the Wishart on the inverse.
    """
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    p = scale.shape[0]
    if not df > p - 1:
        raise InvalidInputError(f"inverse-Wishart needs df > {p - 1}, got {df}")
    U = cholesky_with_jitter(scale, "inverse-Wishart scale")
    A = np.zeros((p, p))
    A[np.diag_indices(p)] = np.sqrt(rng.chisquare(df - np.arange(p)))
    A[np.tril_indices(p, -1)] = rng.standard_normal(p * (p - 1) // 2)
    # Sigma = (U^{-T} A A^T U^{-1})^{-1} = M M^T with M = U A^{-T}
    M = linalg.solve_triangular(A, U.T, lower=True).T
    return M @ M.T


def sample_sigma_conditional(y_k, mu_k, W_k, nu_k, rng):
    """Draw ``Sigma_k`` from ``Inv-Wishart(nu_k + 1, W_k + r r^T)``, ``r = y_k - mu_k``."""
    r = np.asarray(y_k, dtype=float) - np.asarray(mu_k, dtype=float)
    W = np.atleast_2d(np.asarray(W_k, dtype=float))
    if W.shape == (1, 1) and r.size > 1:
        W = W[0, 0] * np.eye(r.size)
    if not nu_k + 1 > r.size - 1:
        raise InvalidInputError(f"nu_k + 1 = {nu_k + 1} must exceed j_k - 1 = {r.size - 1}")
    return sample_inv_wishart(nu_k + 1, W + np.outer(r, r), rng)


def sample_lambda0_conditional(mu, K, eta, beta, rng):
    """Gamma draw with shape ``(n-2)/2 + eta`` and rate ``mu^T K mu / 2 + beta``."""
    if not (eta > 0 and beta > 0):
        raise InvalidInputError("eta and beta must be positive")
    mu = np.asarray(mu, dtype=float)
    R = max(float(mu @ np.asarray(K) @ mu), 0.0)
    shape = 0.5 * (mu.size - 2) + eta
    rate = 0.5 * R + beta
    return rng.gamma(shape, 1.0 / rate)


def _order_neighbours(joint):
    """For each joint index, the joint indices that must stay below / above it."""
    below = [set() for _ in range(joint.n)]
    above = [set() for _ in range(joint.n)]
    for ix in joint.incidence:
        for a, b in zip(ix[:-1], ix[1:]):
            above[a].add(int(b))
            below[b].add(int(a))
    return [np.array(sorted(s), dtype=int) for s in below], [
        np.array(sorted(s), dtype=int) for s in above
    ]


def _sorted_roughness(tau, mu):
    order = np.argsort(tau)
    return roughness_at(_spline_parts(tau[order]), mu[order])


def update_tau_mh(state, t, psi, joint, rng, indices=None, neighbours=None):
    """One sweep of componentwise random-walk Metropolis over the true dates.

    Each ``tau_i`` (ascending ``i``, or only ``indices``) gets a proposal
    ``tau_i + N(0, (0.1 psi_i)^2)``; proposals breaking a record's temporal
    order or colliding with another knot are rejected, the rest accepted with
    the usual ratio of ``exp(-(tau - t)^2 / (2 psi^2) - lambda0 mu^T K(tau) mu / 2)``.

    Returns the new dates and a boolean array of accepted moves.
    """
    tau = np.array(state.tau, dtype=float)
    t = np.asarray(t, dtype=float)
    psi = np.asarray(psi, dtype=float)
    mu = np.asarray(state.mu, dtype=float)
    lam = float(state.lambda0)
    below, above = neighbours if neighbours is not None else _order_neighbours(joint)
    idx = range(tau.size) if indices is None else indices
    accepted = np.zeros(tau.size, dtype=bool)
    R_cur = _sorted_roughness(tau, mu)
    steps = rng.standard_normal(tau.size) * TAU_STEP_FRACTION * psi
    logu = np.log(rng.uniform(size=tau.size))
    for i in idx:
        old = tau[i]
        new = old + steps[i]
        if below[i].size and np.any(tau[below[i]] >= new):
            continue
        if above[i].size and np.any(tau[above[i]] <= new):
            continue
        if np.any(tau == new):
            continue
        tau[i] = new
        R_new = _sorted_roughness(tau, mu)
        dlog = -0.5 * ((new - t[i]) ** 2 - (old - t[i]) ** 2) / psi[i] ** 2
        dlog -= 0.5 * lam * (R_new - R_cur)
        if logu[i] < dlog:
            accepted[i] = True
            R_cur = R_new
        else:
            tau[i] = old
    return tau, accepted


@dataclass(frozen=True, eq=False)
class Chain:
    """Post-burn-in samples of the consensus posterior.

    Arrays are indexed by stored sample first.  ``contributions`` has shape
    ``(S, m, n)`` and is absent for the extended model; full covariances are
    kept only when requested.
    """

    mu: np.ndarray
    lambda0: np.ndarray
    tau: np.ndarray
    sigma_diag: tuple
    joint: object
    model: object
    sampler: SamplerConfig
    record_values: tuple
    sigmas: tuple | None = None
    contributions: np.ndarray | None = None
    tau_acceptance: np.ndarray | None = None
    iterations: np.ndarray = field(default=None)

    def __len__(self):
        return self.mu.shape[0]

    @property
    def random_dates(self):
        return bool(self.model.random_dates)

    @property
    def extended(self):
        return bool(self.model.extended)

    def state(self, i):
        if self.sigmas is None:
            raise ConfigurationError("chain was run without store_covariances")
        return ConsensusState(
            mu=self.mu[i],
            sigmas=tuple(S[i] for S in self.sigmas),
            lambda0=float(self.lambda0[i]),
            tau=self.tau[i],
        )

    def summary(self):
        """Posterior means, sds and Geweke z-scores of the scalar traces."""
        out = {
            "lambda0": _trace_summary(self.lambda0),
            "roughness": _trace_summary(self.roughness()),
        }
        for k, d in enumerate(self.sigma_diag):
            out[f"sigma_diag_mean[{self.joint.record_ids[k] if not self.extended else k}]"] = (
                _trace_summary(d.mean(axis=1))
            )
        if self.tau_acceptance is not None:
            out["tau_acceptance_mean"] = float(np.mean(self.tau_acceptance))
        return out

    def roughness(self):
        """Posterior sample of the roughness ``mu^T K mu``."""
        if not self.random_dates:
            parts = _spline_parts(self.joint.t)
            return np.array([roughness_at(parts, m) for m in self.mu])
        return np.array([_sorted_roughness(tau, m) for tau, m in zip(self.tau, self.mu)])


def geweke_zscore(x, first=0.1, last=0.5):
    """Geweke convergence z-score comparing early and late segments of a trace."""
    x = np.asarray(x, dtype=float)
    n = x.size
    a = x[: max(int(first * n), 2)]
    b = x[n - max(int(last * n), 2):]
    va = _spectral_variance(a) / a.size
    vb = _spectral_variance(b) / b.size
    denom = np.sqrt(va + vb)
    return float((a.mean() - b.mean()) / denom) if denom > 0 else 0.0


def _spectral_variance(x, n_batches=10):
    """Long-run variance by batch means."""
    n_batches = min(n_batches, x.size)
    size = x.size // n_batches
    if size < 2:
        return float(np.var(x, ddof=1)) if x.size > 1 else 0.0
    means = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(size * np.var(means, ddof=1))


def _trace_summary(x):
    return {"mean": float(np.mean(x)), "sd": float(np.std(x)), "geweke_z": geweke_zscore(x)}


class _Problem:
    """Data and fixed structure shared by all sweeps of one run."""

    def __init__(self, anomalies, joint, model):
        self.joint = joint
        self.model = model
        self.ys = [np.asarray(a.values, dtype=float) for a in anomalies]
        if len(self.ys) != len(joint.incidence):
            raise ConfigurationError("number of records does not match the joint chronology")
        for k, (yk, ix) in enumerate(zip(self.ys, joint.incidence)):
            if yk.size != len(ix):
                raise ConfigurationError(f"record {k} has {yk.size} values for {len(ix)} dates")
        model.check_sizes(joint.sizes)
        if model.random_dates:
            if joint.psi is None:
                raise ConfigurationError("random dates need smoothed dating errors psi on the chronology")
            self.neighbours = _order_neighbours(joint)
        if model.extended:
            self.W = [model.pooled_scale(joint.sizes)]
            self.y_cat = np.concatenate(self.ys)
            self.cols = np.concatenate(joint.incidence)
        else:
            self.W = [model.scale_matrix(k, yk.size) for k, yk in enumerate(self.ys)]

    def prior_mean_sigmas(self):
        if self.model.extended:
            j = self.y_cat.size
            return (self.W[0] / (self.model.nu[0] - j - 1),)
        return tuple(
            W / (nu - W.shape[0] - 1) for W, nu in zip(self.W, self.model.nu)
        )


def gibbs_sweep(state, problem, rng, K=None):
    """One full update ``mu -> Sigma -> lambda0 -> tau``.

    Returns the new state, its roughness matrix and the tau acceptance flags
    (``None`` without random dates).
    """
    model = problem.model
    if K is None:
        K = joint_roughness_matrix(state.tau)
    mu = _step("mu", sample_mu_conditional, state, problem.ys, problem.joint, K, rng,
               extended=model.extended, null_precision=model.null_precision)
    if model.extended:
        sigmas = (_step("Sigma", sample_sigma_conditional, problem.y_cat, mu[problem.cols],
                        problem.W[0], model.nu[0], rng),)
    else:
        sigmas = tuple(
            _step(f"Sigma[{k}]", sample_sigma_conditional, yk, mu[ix], W, nu, rng)
            for k, (yk, ix, W, nu) in enumerate(
                zip(problem.ys, problem.joint.incidence, problem.W, model.nu)
            )
        )
    lambda0 = sample_lambda0_conditional(mu, K, model.eta, model.beta, rng)
    state = ConsensusState(mu=mu, sigmas=sigmas, lambda0=lambda0, tau=state.tau)
    accepted = None
    if model.random_dates:
        tau, accepted = update_tau_mh(
            state, problem.joint.t, problem.joint.psi, problem.joint, rng,
            neighbours=problem.neighbours,
        )
        state = ConsensusState(mu=mu, sigmas=sigmas, lambda0=lambda0, tau=tau)
        if accepted.any():
            K = joint_roughness_matrix(tau)
    return state, K, accepted


def _step(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except NumericalError as exc:
        raise NumericalError(f"{name}: {exc}") from exc


def initial_state(problem, rng):
    """Start from the priors: lambda0 drawn, covariances at their prior means,
    dates at their observed values and mu drawn from its conditional."""
    model = problem.model
    lambda0 = rng.gamma(model.eta, 1.0 / model.beta)
    sigmas = problem.prior_mean_sigmas()
    tau = problem.joint.t.copy()
    K = joint_roughness_matrix(tau)
    draft = ConsensusState(mu=np.zeros(tau.size), sigmas=sigmas, lambda0=lambda0, tau=tau)
    mu = sample_mu_conditional(draft, problem.ys, problem.joint, K, rng,
                               extended=model.extended, null_precision=model.null_precision)
    return ConsensusState(mu=mu, sigmas=sigmas, lambda0=lambda0, tau=tau), K


def run_chain(anomalies, joint, model, sampler=None, progress=None):
    """Run the hybrid sampler and return the post-burn-in :class:`Chain`.

    Parameters
    ----------
    anomalies : list of AnomalySeries
        Centered records in the order of ``joint.incidence``.
    joint : JointChronology
    model : ModelConfig
    sampler : SamplerConfig, optional
    progress : callable, optional
        Called as ``progress(iteration)`` after every sweep.
    """
    sampler = sampler or SamplerConfig()
    problem = _Problem(anomalies, joint, model)
    rng = np.random.default_rng(sampler.seed)
    S = sampler.n_kept
    n = joint.n
    m = len(problem.ys)
    mu_out = np.empty((S, n))
    lam_out = np.empty(S)
    tau_out = np.empty((S, n))
    dims = [problem.y_cat.size] if model.extended else [y.size for y in problem.ys]
    diag_out = tuple(np.empty((S, d)) for d in dims)
    sig_out = tuple(np.empty((S, d, d)) for d in dims) if sampler.store_covariances else None
    contrib_out = None if model.extended else np.empty((S, m, n))
    acc_count = np.zeros(n)
    iters = np.empty(S, dtype=int)

    try:
        state, K = initial_state(problem, rng)
    except NumericalError as exc:
        raise NumericalError(f"initialization: {exc}") from exc

    slot = 0
    for it in range(sampler.n_iter):
        try:
            state, K, accepted = gibbs_sweep(state, problem, rng, K)
        except NumericalError as exc:
            raise NumericalError(f"iteration {it}: {exc}") from exc
        if accepted is not None:
            acc_count += accepted
        if it >= sampler.burn_in and (it - sampler.burn_in) % sampler.thin == 0:
            mu_out[slot] = state.mu
            lam_out[slot] = state.lambda0
            tau_out[slot] = state.tau
            for k, Sg in enumerate(state.sigmas):
                cholesky_with_jitter(Sg, f"stored covariance {k} at iteration {it}")
                diag_out[k][slot] = np.diag(Sg)
                if sig_out is not None:
                    sig_out[k][slot] = Sg
            if contrib_out is not None:
                try:
                    contrib_out[slot] = record_contribution_vectors(
                        state, problem.ys, joint, K, model.null_precision
                    )
                except NumericalError as exc:
                    raise NumericalError(f"iteration {it}: contributions: {exc}") from exc
            iters[slot] = it
            slot += 1
        if progress is not None:
            progress(it)

    if model.random_dates and not all(tau_order_ok(tt, joint) for tt in tau_out):
        raise NumericalError("stored dates violate the chronological order")
    return Chain(
        mu=mu_out,
        lambda0=lam_out,
        tau=tau_out,
        sigma_diag=diag_out,
        joint=joint,
        model=model,
        sampler=sampler,
        record_values=tuple(problem.ys),
        sigmas=sig_out,
        contributions=contrib_out,
        tau_acceptance=acc_count / sampler.n_iter if model.random_dates else None,
        iterations=iters,
    )
