"""Hierarchical consensus model: configuration, log-densities, prior elicitation.

All log-densities are returned up to additive constants that do not depend on
the parameters being sampled.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

from ._validation import as_vector, check_positive, check_probability, check_square_spd
from .exceptions import ConfigurationError, InvalidInputError, NumericalError
from .splines import build_roughness_matrix, roughness

ERROR_MODES = ("large", "small", "custom")

# settings of the two standard error priors
LARGE_ERROR_W = 0.5
SMALL_ERROR_W = 50.0
SMALL_ERROR_SIGMA_BAR = 0.2


@dataclass(frozen=True, eq=False)
class ModelConfig:
    """Hyperparameters of the consensus model.

    Parameters
    ----------
    w, nu : tuple of float
        Per-record inverse-Wishart scale ``W_k = w_k I`` and degrees of
        freedom.  In extended mode ``nu`` has a single entry for the pooled
        covariance and ``W`` is the block diagonal of the ``w_k I``.
    eta, beta : float
        Shape and rate of the Gamma prior on ``lambda0``.
    sigma_bar : tuple of float, optional
        Prior error scales the degrees of freedom were derived from.
    null_precision : float
        Precision of a proper Gaussian prior on the constant-plus-linear part
        of ``mu``; zero keeps the improper smoothing prior.
    """

    w: tuple
    nu: tuple
    eta: float = 20.0
    beta: float = 0.5
    extended: bool = False
    random_dates: bool = False
    sigma_bar: tuple | None = None
    error_mode: str = "custom"
    null_precision: float = 0.0

    def __post_init__(self):
        check_positive(self.eta, "eta")
        check_positive(self.beta, "beta")
        check_positive(self.null_precision, "null_precision", allow_zero=True)
        for wk in self.w:
            check_positive(wk, "w")
        if self.extended and len(self.nu) != 1:
            raise ConfigurationError("the extended model takes a single degrees-of-freedom value")
        if not self.extended and len(self.nu) != len(self.w):
            raise ConfigurationError(f"{len(self.w)} scales but {len(self.nu)} degrees of freedom")

    def check_sizes(self, sizes):
        """Confirm every prior covariance mean exists for records of ``sizes``."""
        if len(sizes) != len(self.w):
            raise ConfigurationError(f"config has {len(self.w)} records, data has {len(sizes)}")
        dims = [sum(sizes)] if self.extended else list(sizes)
        for nu, j in zip(self.nu, dims):
            if not nu > j + 1:
                raise ConfigurationError(
                    f"degrees of freedom {nu} must exceed dimension + 1 = {j + 1}"
                )

    def scale_matrix(self, k, size):
        return self.w[k] * np.eye(size)

    def pooled_scale(self, sizes):
        return np.diag(np.repeat(np.asarray(self.w, dtype=float), sizes))

    @classmethod
    def from_error_mode(
        cls,
        anomalies,
        mode="large",
        sigma_bar=None,
        w=None,
        eta=20.0,
        beta=0.5,
        extended=False,
        random_dates=False,
        null_precision=0.0,
    ):
        """Elicit inverse-Wishart hyperparameters for ``anomalies``.

        ``"large"`` bounds each record's error from its own variability with
        ``w = 0.5``; ``"small"`` uses ``sigma_bar = 0.2`` with ``w = 50``;
        ``"custom"`` requires ``sigma_bar`` for every record.  ``sigma_bar``
        may be a mapping from record id to value overriding the mode.
        """
        if mode not in ERROR_MODES:
            raise ConfigurationError(f"unknown error mode {mode!r}; use one of {ERROR_MODES}")
        anomalies = list(anomalies)
        ids = [a.record_id for a in anomalies]
        overrides = dict(sigma_bar or {})
        unknown = set(overrides) - set(ids)
        if unknown:
            raise ConfigurationError(f"sigma_bar given for unknown records: {sorted(unknown)}")

        bounds, scales = [], []
        for a in anomalies:
            if a.record_id in overrides:
                sb = float(overrides[a.record_id])
            elif mode == "large":
                sb = elicit_error_bound(a.values)
            elif mode == "small":
                sb = SMALL_ERROR_SIGMA_BAR
            else:
                raise ConfigurationError(f"custom error mode needs sigma_bar for record {a.record_id!r}")
            if not sb > 0:
                raise ConfigurationError(f"record {a.record_id!r}: error bound must be > 0, got {sb}")
            bounds.append(sb)
            if w is not None:
                scales.append(float(w))
            else:
                scales.append(SMALL_ERROR_W if mode == "small" else LARGE_ERROR_W)

        sizes = [len(a) for a in anomalies]
        if extended:
            j = sum(sizes)
            excess = sum(jk * wk / sb**2 for jk, wk, sb in zip(sizes, scales, bounds)) / j
            nu = (j + 1 + excess,)
        else:
            nu = tuple(
                wishart_dof_from_bound(sb, wk, jk) for sb, wk, jk in zip(bounds, scales, sizes)
            )
        return cls(
            w=tuple(scales),
            nu=nu,
            eta=eta,
            beta=beta,
            extended=extended,
            random_dates=random_dates,
            sigma_bar=tuple(bounds),
            error_mode=mode,
            null_precision=null_precision,
        )


@dataclass(frozen=True, eq=False)
class ConsensusState:
    """One point of the parameter space.

    ``sigmas`` holds one covariance per record, or a single pooled matrix in
    extended mode.  ``mu`` and ``tau`` are indexed by joint date.
    """

    mu: np.ndarray
    sigmas: tuple
    lambda0: float
    tau: np.ndarray


def joint_roughness_matrix(tau):
    """Roughness matrix for knot values indexed like ``tau``.

    The spline lives on the sorted knots; the returned dense matrix is
    permuted back to the joint-index order of ``tau``.
    """
    tau = as_vector(tau, "tau")
    order = np.argsort(tau, kind="stable")
    Ks = build_roughness_matrix(tau[order]).K
    K = np.empty_like(Ks)
    K[np.ix_(order, order)] = Ks
    return K


def null_space_projector(tau):
    """Orthogonal projector onto constants and linear functions of ``tau``."""
    X = np.column_stack([np.ones_like(tau), tau - tau.mean()])
    Qx, _ = np.linalg.qr(X)
    return Qx @ Qx.T


def _chol(S, what):
    try:
        return linalg.cholesky(S, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"{what} is not positive definite") from exc


def _gaussian_terms(resid, Sigma, what="covariance"):
    L = _chol(check_square_spd(Sigma, what), what)
    z = linalg.solve_triangular(L, resid, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return -0.5 * logdet, -0.5 * float(z @ z)


def _split(y, joint):
    if isinstance(y, np.ndarray) and y.ndim == 1:
        bounds = np.cumsum(joint.sizes)[:-1]
        return np.split(y, bounds)
    return [np.asarray(v, dtype=float) for v in y]


def log_likelihood(y, state, joint, extended=False):
    """Gaussian log-likelihood of the anomalies.

    ``y`` is a list of per-record anomaly vectors or their concatenation.
    """
    ys = _split(y, joint)
    if extended:
        resid = np.concatenate(ys) - state.mu[np.concatenate(joint.incidence)]
        a, b = _gaussian_terms(resid, state.sigmas[0], "pooled covariance")
        return a + b
    total = 0.0
    for k, (yk, ix) in enumerate(zip(ys, joint.incidence)):
        if yk.size != len(ix):
            raise InvalidInputError(f"record {k}: {yk.size} values for {len(ix)} dates")
        a, b = _gaussian_terms(yk - state.mu[ix], state.sigmas[k], f"covariance of record {k}")
        total += a + b
    return total


def log_prior_mu(mu, lambda0, K, null_precision=0.0, tau=None):
    """Smoothing prior ``((n-2)/2) log lambda0 - (lambda0/2) mu^T K mu``.

    With ``null_precision > 0`` a Gaussian term on the projection of ``mu``
    onto constants and lines in ``tau`` is added.
    """
    lambda0 = float(lambda0)
    if not lambda0 > 0:
        raise InvalidInputError(f"lambda0 must be > 0, got {lambda0}")
    mu = np.asarray(mu, dtype=float)
    n = mu.size
    val = 0.5 * (n - 2) * np.log(lambda0) - 0.5 * lambda0 * roughness(mu, K)
    if null_precision > 0:
        if tau is None:
            raise InvalidInputError("tau is needed for the null-space prior term")
        P = null_space_projector(np.asarray(tau, dtype=float))
        val -= 0.5 * null_precision * float(mu @ P @ mu)
    return val


def log_inv_wishart(Sigma, W, nu):
    """Inverse-Wishart kernel ``|S|^{-(nu+p+1)/2} exp(-tr(W S^{-1}) / 2)``."""
    Sigma = check_square_spd(Sigma, "Sigma")
    W = check_square_spd(W, "W")
    p = Sigma.shape[0]
    if W.shape != Sigma.shape:
        raise InvalidInputError(f"W shape {W.shape} does not match Sigma shape {Sigma.shape}")
    if not nu > p - 1:
        raise InvalidInputError(f"degrees of freedom must exceed {p - 1}, got {nu}")
    _chol(W, "inverse-Wishart scale W")
    L = _chol(Sigma, "Sigma")
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    Linv_W = linalg.solve_triangular(L, W, lower=True)
    trace = float(np.trace(linalg.solve_triangular(L, Linv_W.T, lower=True)))
    return -0.5 * (nu + p + 1) * logdet - 0.5 * trace


def log_gamma_prior(lambda0, eta, beta):
    if not lambda0 > 0:
        return -np.inf
    return (eta - 1.0) * np.log(lambda0) - beta * lambda0


def date_log_likelihood(t, tau, psi):
    """Gaussian dating-error log-likelihood of observed dates ``t``."""
    t = as_vector(t, "t")
    tau = as_vector(tau, "tau")
    psi = as_vector(psi, "psi")
    if not (t.size == tau.size == psi.size):
        raise InvalidInputError("t, tau and psi must have equal lengths")
    if np.any(psi <= 0):
        raise InvalidInputError("psi must be positive")
    z = (t - tau) / psi
    return float(-np.sum(np.log(psi)) - 0.5 * np.sum(z * z))


def tau_order_ok(tau, joint):
    tau = np.asarray(tau, dtype=float)
    return all(np.all(np.diff(tau[ix]) > 0) for ix in joint.incidence)


def chi_square_quantile(df, p):
    """Quantile of the chi-square distribution with ``df`` degrees of freedom."""
    if int(df) != df or df < 1:
        raise InvalidInputError(f"df must be a positive integer, got {df}")
    p = check_probability(p, "p")
    return float(2.0 * special.gammaincinv(0.5 * df, p))


def elicit_error_bound(y, level=0.05):
    """Upper bound for a record's error standard deviation.

    Treats the centered record as ``N(mu, sigma^2 I)`` and returns the
    smallest ``sigma`` not rejected at ``level`` by the test that rejects
    large errors when the squared norm is small.
    """
    y = as_vector(y, "y")
    if y.size < 2:
        raise InvalidInputError("error bound needs at least 2 values")
    V = float(y @ y)
    return float(np.sqrt(V / chi_square_quantile(y.size - 1, level)))


def wishart_dof_from_bound(sigma_bar, w, j):
    """Degrees of freedom giving prior mean ``sigma_bar^2 I`` for ``W = w I``."""
    sigma_bar = float(sigma_bar)
    if not sigma_bar > 0:
        raise InvalidInputError(f"sigma_bar must be > 0, got {sigma_bar}")
    w = check_positive(w, "w")
    return j + 1 + w / sigma_bar**2


def build_expansion_matrix(joint):
    """0/1 matrix ``G`` with ``G mu`` stacking the record blocks of ``mu``."""
    cols = np.concatenate(joint.incidence)
    G = np.zeros((cols.size, joint.n))
    G[np.arange(cols.size), cols] = 1.0
    return G


def log_posterior(state, y, t, config, joint, K=None):
    """Unnormalized log joint posterior of ``state``.

    ``K`` defaults to the roughness matrix on the state's dates.  Without
    random dates the date likelihood and order prior are dropped.
    """
    if config.random_dates and not tau_order_ok(state.tau, joint):
        return -np.inf
    if K is None:
        K = joint_roughness_matrix(state.tau)
    ys = _split(y, joint)
    total = log_gamma_prior(state.lambda0, config.eta, config.beta)
    if config.extended:
        W = config.pooled_scale(joint.sizes)
        total += log_inv_wishart(state.sigmas[0], W, config.nu[0])
    else:
        for k, (S, yk) in enumerate(zip(state.sigmas, ys)):
            total += log_inv_wishart(S, config.scale_matrix(k, yk.size), config.nu[k])
    total += log_prior_mu(state.mu, state.lambda0, K, config.null_precision, state.tau)
    total += log_likelihood(ys, state, joint, extended=config.extended)
    if config.random_dates:
        if joint.psi is None:
            raise ConfigurationError("random dates need smoothed dating errors psi")
        total += date_log_likelihood(t, state.tau, joint.psi)
    return total
