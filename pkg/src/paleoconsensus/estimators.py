"""Estimator-style wrappers around the sampler and the scale-space analysis."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .chronology import ProxySeries, bin_dates, center, merge_chronologies, smooth_date_errors
from .exceptions import ConfigurationError, InvalidInputError
from .model import ModelConfig
from .sampler import Chain, SamplerConfig, run_chain
from .scale_space import (
    build_credibility_map,
    default_scale_grid,
    default_time_grid,
    posterior_mean_smooth,
)
from .splines import interpolate


def _as_series(records):
    out = []
    for i, r in enumerate(records):
        if isinstance(r, ProxySeries):
            out.append(r)
        elif isinstance(r, dict):
            out.append(ProxySeries(r.get("record_id", f"rec{i + 1}"), r["age_bp"], r["values"],
                                   r.get("age_sd")))
        else:
            raise InvalidInputError("records must be ProxySeries or dicts with age_bp and values")
    if not out:
        raise InvalidInputError("at least one record is required")
    return out


class ConsensusModel(BaseEstimator):
    """Bayesian consensus of several proxy records.

    ``fit`` takes a list of :class:`ProxySeries` (or dicts with ``age_bp``,
    ``values`` and optionally ``record_id`` and ``age_sd``) and samples the
    posterior of the consensus anomaly.

    Attributes
    ----------
    chain_ : Chain
    joint_ : JointChronology
    anomalies_ : list of AnomalySeries
    model_config_ : ModelConfig
    """

    def __init__(
        self,
        error_mode="large",
        sigma_bar=None,
        w=None,
        eta=20.0,
        beta=0.5,
        bin_width=15.0,
        random_dates=False,
        extended=False,
        n_iter=4000,
        burn_in=2000,
        thin=1,
        random_state=0,
        date_bandwidth=None,
        null_precision=0.0,
    ):
        self.error_mode = error_mode
        self.sigma_bar = sigma_bar
        self.w = w
        self.eta = eta
        self.beta = beta
        self.bin_width = bin_width
        self.random_dates = random_dates
        self.extended = extended
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.thin = thin
        self.random_state = random_state
        self.date_bandwidth = date_bandwidth
        self.null_precision = null_precision

    def fit(self, records, y=None):
        series = bin_dates(_as_series(records), self.bin_width)
        self.anomalies_ = [center(s) for s in series]
        joint = merge_chronologies(self.anomalies_)
        if self.random_dates:
            if joint.mean_sd is None:
                raise ConfigurationError("random dates require age_sd for every record")
            joint = joint.with_psi(smooth_date_errors(joint.t, joint.mean_sd, self.date_bandwidth))
        self.joint_ = joint
        self.model_config_ = ModelConfig.from_error_mode(
            self.anomalies_,
            self.error_mode,
            sigma_bar=self.sigma_bar,
            w=self.w,
            eta=self.eta,
            beta=self.beta,
            extended=self.extended,
            random_dates=self.random_dates,
            null_precision=self.null_precision,
        )
        seed = self.random_state if self.random_state is not None else np.random.SeedSequence().entropy
        sampler = SamplerConfig(n_iter=self.n_iter, burn_in=self.burn_in, thin=self.thin, seed=seed)
        self.chain_ = run_chain(self.anomalies_, joint, self.model_config_, sampler)
        return self

    def predict(self, age_bp):
        """Posterior mean of the consensus interpolant at ``age_bp``."""
        check_is_fitted(self, "chain_")
        s = -np.asarray(age_bp, dtype=float)
        t = self.joint_.t
        if np.any(s < t[0]) or np.any(s > t[-1]):
            raise InvalidInputError("ages outside the span of the joint chronology")
        if not self.chain_.random_dates:
            return interpolate(t, self.chain_.mu.mean(axis=0), s)
        curves = []
        for tau, mu in zip(self.chain_.tau, self.chain_.mu):
            o = np.argsort(tau)
            curves.append(interpolate(tau[o], mu[o], np.clip(s, tau[o][0], tau[o][-1])))
        return np.mean(curves, axis=0)

    def posterior_summary(self, quantiles=(0.05, 0.95)):
        """Mean and pointwise quantiles of ``mu`` at the joint dates (youngest first)."""
        check_is_fitted(self, "chain_")
        mu = self.chain_.mu
        order = np.argsort(self.joint_.age_bp, kind="stable")
        out = {"age_bp": self.joint_.age_bp[order], "mean": mu.mean(axis=0)[order]}
        for q in quantiles:
            out[f"q{round(100 * q):02d}"] = np.quantile(mu, q, axis=0)[order]
        return out


class ScaleSpaceAnalyzer(BaseEstimator, TransformerMixin):
    """Credibility map of trend signs across smoothing levels.

    ``fit`` accepts a :class:`Chain` or a fitted :class:`ConsensusModel`;
    ``transform`` returns the flag lattice (levels x time points).
    """

    def __init__(self, alpha=0.8, scale_levels=200, lambda_min=None, lambda_max=None,
                 time_points=2000, n_jobs=1):
        self.alpha = alpha
        self.scale_levels = scale_levels
        self.lambda_min = lambda_min
        self.lambda_max = lambda_max
        self.time_points = time_points
        self.n_jobs = n_jobs

    @staticmethod
    def _chain(X):
        if isinstance(X, ConsensusModel):
            check_is_fitted(X, "chain_")
            return X.chain_
        if isinstance(X, Chain):
            return X
        raise InvalidInputError("expected a Chain or a fitted ConsensusModel")

    def fit(self, X, y=None):
        chain = self._chain(X)
        t = chain.joint.t
        self.scale_grid_ = default_scale_grid(t, self.scale_levels, self.lambda_min, self.lambda_max)
        self.time_grid_ = default_time_grid(t, self.time_points)
        self.map_ = build_credibility_map(chain, self.scale_grid_, self.time_grid_, self.alpha,
                                          n_jobs=self.n_jobs)
        self.chain_ = chain
        return self

    def transform(self, X):
        check_is_fitted(self, "map_")
        if self._chain(X) is not self.chain_:
            return build_credibility_map(self._chain(X), self.scale_grid_, self.time_grid_,
                                         self.alpha, n_jobs=self.n_jobs).flags
        return self.map_.flags

    def smooth(self, lam):
        """Posterior mean smooth at level ``lam`` on the fitted time grid."""
        check_is_fitted(self, "map_")
        return posterior_mean_smooth(self.chain_, lam, self.time_grid_)
