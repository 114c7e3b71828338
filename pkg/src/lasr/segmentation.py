"""Intensity segmentation via 1-D Gaussian mixtures.

A frame's intensity histogram is modeled as a mixture whose first
(lowest-mean) component is background.  The background/signal cut ``T`` is
placed where the background density equals the pooled signal density,

    alpha_1 * phi((T - mu_1)/sigma_1) / sigma_1
        = sum_{i >= 2} alpha_i * phi((T - mu_i)/sigma_i) / sigma_i,

which minimizes the probability of misclassification for the fitted model.
Segmentation keeps values strictly above ``T`` and zeroes the rest.

Exact zeros are always background: they are excluded from the EM sample
and can never exceed a positive threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp
from scipy.stats import norm

from .errors import DataError, NumericError
from .frames import Frame, Movie

__all__ = [
    "InitSpec",
    "MixtureModel",
    "SegmentationResult",
    "positive_samples",
    "fit_mixture",
    "select_model",
    "pmc_oracle",
    "optimal_threshold",
    "segment_frame",
    "segment_movie",
]

_VAR_FLOOR_SCALE = 1e-3  # sd floor relative to the sample sd


@dataclass(frozen=True)
class InitSpec:
    """EM initialization policy: deterministic quantile start plus jittered restarts."""

    n_restarts: int = 5
    jitter: float = 0.25
    seed: int = 0


@dataclass(frozen=True)
class MixtureModel:
    """A fitted 1-D Gaussian mixture, components sorted by mean."""

    m: int
    weights: np.ndarray
    means: np.ndarray
    sds: np.ndarray
    loglik: float
    converged: bool
    n_iter: int
    loglik_trace: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.asarray(self.means, dtype=np.float64)
        sd = np.asarray(self.sds, dtype=np.float64)
        if not (len(w) == len(mu) == len(sd) == self.m):
            raise DataError("mixture parameter arrays must all have length m")
        if abs(w.sum() - 1.0) > 1e-10 or (w <= 0).any():
            raise DataError("mixture weights must be positive and sum to 1")
        if (sd <= 0).any():
            raise DataError("mixture sds must be positive")
        if (np.diff(mu) < 0).any():
            raise DataError("mixture means must be sorted ascending")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "sds", sd)


@dataclass(frozen=True)
class SegmentationResult:
    """Threshold ``t`` for a fitted model and how it was obtained."""

    t: float
    model: MixtureModel
    method: str  # "root" | "grid-fallback"

    def __post_init__(self):
        if self.method == "root":
            mu = self.model.means
            if not (mu[0] < self.t < mu.max()):
                raise NumericError("root threshold escaped (mu_1, max mu_i)")


def positive_samples(frame: Frame) -> np.ndarray:
    """Strictly positive values of a frame, flattened (the EM sample)."""
    v = frame.values
    return v[v > 0]


# ---------------------------------------------------------------------------
# EM fit
# ---------------------------------------------------------------------------


def _log_density(x: np.ndarray, w, mu, sd) -> np.ndarray:
    """Per-sample log mixture density, via logsumexp over components."""
    z = (x[:, None] - mu[None, :]) / sd[None, :]
    comp = -0.5 * z * z - np.log(sd)[None, :] - 0.5 * np.log(2.0 * np.pi)
    return logsumexp(comp + np.log(w)[None, :], axis=1)


def _em_run(x, w, mu, sd, floor, tol, max_iter):
    """One EM run from the given start; the sd floor is kept in force throughout."""
    n = x.size
    trace = []
    ll = _log_density(x, w, mu, sd).sum()
    trace.append(ll)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        # E-step: responsibilities in log space
        z = (x[:, None] - mu[None, :]) / sd[None, :]
        logp = -0.5 * z * z - np.log(sd)[None, :] - 0.5 * np.log(2.0 * np.pi) + np.log(w)[None, :]
        logp -= logsumexp(logp, axis=1, keepdims=True)
        r = np.exp(logp)
        # M-step
        nk = r.sum(axis=0)
        nk = np.maximum(nk, 1e-12)
        w = nk / n
        w = w / w.sum()
        mu = (r * x[:, None]).sum(axis=0) / nk
        var = (r * (x[:, None] - mu[None, :]) ** 2).sum(axis=0) / nk
        sd = np.maximum(np.sqrt(var), floor)
        ll_new = _log_density(x, w, mu, sd).sum()
        trace.append(ll_new)
        if abs(ll_new - ll) <= tol * (1.0 + abs(ll_new)):
            ll = ll_new
            converged = True
            break
        ll = ll_new
    return w, mu, sd, ll, converged, it, np.array(trace)


def fit_mixture(samples, m: int, init: InitSpec = InitSpec(),
                tol: float = 1e-8, max_iter: int = 300) -> MixtureModel:
    """Fit an m-component 1-D Gaussian mixture by EM.

    Initialization places component means at the (2k-1)/(2m) sample
    quantiles with equal weights and sds = pooled sd / m, then adds
    ``init.n_restarts - 1`` restarts with jittered means; the best final
    log-likelihood wins.  Deterministic given ``init.seed``.  Component
    sds are floored at 1e-3 times the sample sd, so the floor is part of
    the maximization and the per-iteration log-likelihood trace stays
    nondecreasing.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise DataError("empty sample")
    if not np.isfinite(x).all():
        raise DataError("samples must be finite")
    if m < 1:
        raise DataError("m must be >= 1")
    if np.unique(x).size < m:
        raise DataError(f"need at least {m} distinct sample values for m={m}")

    sd_all = float(x.std())
    floor = max(_VAR_FLOOR_SCALE * sd_all, 1e-300)

    if m == 1:
        mu = float(x.mean())
        sd = max(sd_all, floor)
        if sd_all == 0.0:
            raise DataError("degenerate sample: all values identical")
        ll = float(_log_density(x, np.array([1.0]), np.array([mu]), np.array([sd])).sum())
        return MixtureModel(1, np.array([1.0]), np.array([mu]), np.array([sd]),
                            ll, True, 0, np.array([ll]))

    if sd_all == 0.0:
        raise DataError("degenerate sample: all values identical")

    q = (2.0 * np.arange(1, m + 1) - 1.0) / (2.0 * m)
    mu0 = np.quantile(x, q)
    sd0 = np.full(m, max(sd_all / m, floor))
    w0 = np.full(m, 1.0 / m)

    rng = np.random.default_rng(init.seed)
    best = None
    for rep in range(max(1, init.n_restarts)):
        mu_start = mu0 if rep == 0 else np.sort(mu0 + init.jitter * sd_all * rng.standard_normal(m))
        out = _em_run(x, w0.copy(), mu_start.astype(np.float64), sd0.copy(), floor, tol, max_iter)
        if best is None or out[3] > best[3]:
            best = out
    w, mu, sd, ll, converged, it, trace = best

    order = np.argsort(mu, kind="stable")
    return MixtureModel(m, w[order] / w[order].sum(), mu[order], sd[order],
                        float(ll), bool(converged), int(it), trace)


def select_model(samples, candidate_ms: Sequence[int] = (1, 2, 3),
                 init: InitSpec = InitSpec(), tol: float = 1e-8,
                 max_iter: int = 300) -> MixtureModel:
    """Fit each candidate size and keep the best BIC.

    BIC here is loglik - (3m - 1)/2 * ln(n), to be maximized; ties go to
    the smaller model.
    """
    ms = sorted(set(int(m) for m in candidate_ms))
    if not ms:
        raise DataError("no candidate component counts")
    x = np.asarray(samples, dtype=np.float64).ravel()
    n = x.size
    best_model, best_bic = None, -np.inf
    for m in ms:
        model = fit_mixture(x, m, init=init, tol=tol, max_iter=max_iter)
        bic = model.loglik - (3 * m - 1) / 2.0 * np.log(n)
        if bic > best_bic:
            best_model, best_bic = model, bic
    return best_model


# ---------------------------------------------------------------------------
# threshold
# ---------------------------------------------------------------------------


def _density_gap(model: MixtureModel, t):
    """Background density minus pooled signal density at t."""
    w, mu, sd = model.weights, model.means, model.sds
    bg = w[0] * norm.pdf(t, loc=mu[0], scale=sd[0])
    sig = sum(w[i] * norm.pdf(t, loc=mu[i], scale=sd[i]) for i in range(1, model.m))
    return bg - sig


def pmc_oracle(model: MixtureModel, grid: Optional[np.ndarray] = None) -> float:
    """Grid minimizer of the misclassification probability.

    PMC(T) = alpha_1 P(Z_1 > T) + sum_{i>=2} alpha_i P(Z_i <= T).  The
    default grid spans (mu_1, max mu_i) with step (max mu_i - mu_1)/1e5.
    """
    if model.m < 2:
        raise DataError("threshold needs at least 2 components")
    mu = model.means
    if grid is None:
        lo, hi = mu[0], mu.max()
        grid = np.linspace(lo, hi, 100001)
    grid = np.asarray(grid, dtype=np.float64)
    w, sd = model.weights, model.sds
    pmc = w[0] * norm.sf(grid, loc=mu[0], scale=sd[0])
    for i in range(1, model.m):
        pmc = pmc + w[i] * norm.cdf(grid, loc=mu[i], scale=sd[i])
    return float(grid[int(np.argmin(pmc))])


def _pmc_value(model: MixtureModel, t: float) -> float:
    w, mu, sd = model.weights, model.means, model.sds
    v = w[0] * norm.sf(t, loc=mu[0], scale=sd[0])
    for i in range(1, model.m):
        v += w[i] * norm.cdf(t, loc=mu[i], scale=sd[i])
    return float(v)


def optimal_threshold(model: MixtureModel) -> SegmentationResult:
    """Background/signal threshold for a fitted mixture (m >= 2).

    Solves the equal-density equation by root bracketing on
    (mu_1, mu_2); when no sign change exists there, or the root is not a
    local PMC minimum, falls back to the PMC grid minimizer.
    """
    if model.m < 2:
        raise DataError("threshold needs at least 2 components")
    mu = model.means
    lo, hi = float(mu[0]), float(mu[1])
    glo = _density_gap(model, lo)
    ghi = _density_gap(model, hi)
    if np.isfinite(glo) and np.isfinite(ghi) and glo > 0 > ghi:
        t = float(brentq(lambda s: _density_gap(model, s), lo, hi, xtol=1e-14, rtol=8.9e-16))
        # accept the root only if it is a local PMC minimum
        eps = 1e-6 * max(1.0, hi - lo)
        if _pmc_value(model, t) <= min(_pmc_value(model, t - eps), _pmc_value(model, t + eps)) + 1e-15:
            return SegmentationResult(t, model, "root")
    return SegmentationResult(pmc_oracle(model), model, "grid-fallback")


# ---------------------------------------------------------------------------
# applying the threshold
# ---------------------------------------------------------------------------


def segment_frame(frame: Frame, t: float) -> Frame:
    """Zero everything at or below ``t``; support mask = values > t."""
    keep = frame.values > t
    out = np.where(keep, frame.values, 0.0)
    return Frame(out, support_mask=keep)


def segment_movie(movie: Movie, t: float) -> Movie:
    """Apply one threshold to every frame of a movie."""
    return Movie(tuple(segment_frame(f, t) for f in movie.frames), fps=movie.fps)
