"""Smoothed significance maps for paired pressure frames.

The difference of two registered frames is smoothed by a bivariate local
quadratic fit: at each analysis pixel x, the values y_i at neighboring
pixels x_i are fit by weighted least squares to

    a0 + a1*d1 + a2*d2 + (a3/2)*d1^2 + (a4/2)*d2^2 + a5*d1*d2,

(d1, d2) = x_i - x, with weights w_i = W(||x_i - x|| / h).  The smoothed
value is a0, a linear combination p(x)' y of the data, so the fit has an
explicit hat matrix L.  With residual quadratic-form traces

    delta1 = tr((I-L)'(I-L)),   delta2 = tr([(I-L)'(I-L)]^2),

the residual variance estimate is sigma^2 = RSS/delta1 and the statistic
t(x) = a0 / (sigma * ||p(x)||) is referred to a t distribution with
delta1^2/delta2 degrees of freedom (two-moment approximation).  P-values
are screened by Benjamini-Hochberg (or Benjamini-Yekutieli) step-up FDR
control; the positive-dependence condition backing BH can be probed via
hat-row inner products, which drive the covariance of the smoothed field.

Background pixels within a small rim of the support can be padded with
their nearest supported value before smoothing, so boundary fits are not
starved of neighbors; rim estimates are discarded afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.ndimage import binary_dilation
from scipy.stats import t as student_t

from .errors import ConfigError, DataError, NumericError
from .frames import Frame

__all__ = [
    "KERNELS",
    "SmoothFit",
    "TMap",
    "PMap",
    "FdrConfig",
    "difference_map",
    "pad_rim",
    "local_quadratic_smooth",
    "residual_traces",
    "degrees_of_freedom",
    "t_map",
    "restrict_tmap",
    "p_map",
    "bh_adjust",
    "fdr_map",
    "prds_covariance_check",
]

# kernel id -> (cutoff in units of h, profile W(u) for u = d/h <= cutoff).
# Both kernels vanish beyond one bandwidth, so a rim of ceil(h) padded
# pixels covers the smoother's full reach at the support boundary.
KERNELS = {
    "tgauss": (1.0, lambda u: np.exp(-4.5 * u * u)),
    "tricube": (1.0, lambda u: (1.0 - u ** 3) ** 3),
}

DENSE_TRACE_LIMIT = 20000
TRACE_PROBES = 64


@dataclass(frozen=True)
class SmoothFit:
    """A fitted local quadratic smoother on one difference map."""

    m_hat: np.ndarray       # smoothed estimate, NaN off the mask
    hat_norm: np.ndarray    # ||p(x)||_2 per pixel, NaN off the mask
    sigma_hat: float
    delta1: float
    delta2: float
    rss: float
    bandwidth: float
    kernel: str
    mask: np.ndarray
    hat: sp.csr_matrix      # rows/cols indexed by masked pixels (row-major order)
    pixels: np.ndarray      # (n, 2) masked pixel coordinates, row-major
    trace_method: str       # "dense" | "hutchinson"


@dataclass(frozen=True)
class TMap:
    values: np.ndarray      # t statistics, NaN off the mask
    df: float
    mask: np.ndarray

    def __post_init__(self):
        if self.df <= 0 or not np.isfinite(self.df):
            raise NumericError("degrees of freedom must be positive and finite")


@dataclass(frozen=True)
class PMap:
    """Screened significance map: 1 - p at rejected pixels, 0 elsewhere."""

    values: np.ndarray
    critical_p: float
    n_rejected: int
    mask: np.ndarray

    def __post_init__(self):
        v = self.values
        if ((v < 0) | (v > 1)).any():
            raise DataError("P-map values must lie in [0, 1]")


@dataclass(frozen=True)
class FdrConfig:
    q: float = 0.05
    mode: str = "bh"  # "bh" | "by"

    def __post_init__(self):
        if not (0.0 < self.q < 1.0):
            raise ConfigError(f"q must be in (0, 1), got {self.q}")
        if self.mode not in ("bh", "by"):
            raise ConfigError(f"unknown FDR mode {self.mode!r}")


# ---------------------------------------------------------------------------
# difference + rim padding
# ---------------------------------------------------------------------------


def difference_map(after: Frame, before: Frame) -> Frame:
    """after - before, on the intersection of their supports."""
    if after.shape != before.shape:
        raise DataError("frames must have equal shape")
    ma = after.support_mask if after.support_mask is not None else np.ones(after.shape, bool)
    mb = before.support_mask if before.support_mask is not None else np.ones(before.shape, bool)
    mask = ma & mb
    diff = np.where(mask, after.values - before.values, 0.0)
    return Frame(diff, support_mask=mask, signed=True)


def pad_rim(diff: Frame, rim: int) -> Frame:
    """Fill background pixels within ``rim`` (Chebyshev) of the support.

    Each such pixel receives the value of its nearest supported pixel
    (Euclidean distance; ties broken by smallest row, then column), and
    the mask is extended accordingly.  Pixels beyond the rim are untouched.
    """
    if rim < 0:
        raise ConfigError("rim must be >= 0")
    if diff.support_mask is None:
        raise DataError("difference map has no support mask")
    if rim == 0 or diff.support_mask.all():
        return diff
    mask = diff.support_mask
    if not mask.any():
        raise DataError("empty support")
    band = binary_dilation(mask, structure=np.ones((3, 3), bool), iterations=rim) & ~mask
    br, bc = np.nonzero(band)
    srcs, scols = np.nonzero(mask)
    order = np.lexsort((scols, srcs))  # ties resolve to smallest row, then col
    srcs, scols = srcs[order], scols[order]
    values = diff.values.copy()
    chunk = 2048
    for lo in range(0, br.size, chunk):
        r = br[lo:lo + chunk, None].astype(np.int64)
        c = bc[lo:lo + chunk, None].astype(np.int64)
        d2 = (r - srcs[None, :]) ** 2 + (c - scols[None, :]) ** 2
        pick = np.argmin(d2, axis=1)  # first minimum = smallest (row, col) source
        values[br[lo:lo + chunk], bc[lo:lo + chunk]] = diff.values[srcs[pick], scols[pick]]
    return Frame(values, support_mask=mask | band, signed=diff.signed)


# ---------------------------------------------------------------------------
# local quadratic smoothing
# ---------------------------------------------------------------------------


def _kernel_offsets(h: float, kernel: str):
    try:
        cutoff, profile = KERNELS[kernel]
    except KeyError:
        raise ConfigError(f"unknown kernel {kernel!r}") from None
    radius = cutoff * h
    r = int(np.floor(radius))
    dr, dc = np.meshgrid(np.arange(-r, r + 1), np.arange(-r, r + 1), indexing="ij")
    dist = np.hypot(dr, dc)
    keep = dist <= radius
    dr, dc, dist = dr[keep], dc[keep], dist[keep]
    w = profile(dist / h)
    return dr.astype(np.int64), dc.astype(np.int64), w


def local_quadratic_smooth(diff: Frame, h: float = 3.0, kernel: str = "tgauss",
                           dense_trace_limit: int = DENSE_TRACE_LIMIT,
                           trace_probes: int = TRACE_PROBES,
                           trace_seed: int = 0) -> SmoothFit:
    """Fit the local quadratic smoother over the masked pixels of ``diff``.

    Parameters
    ----------
    diff : Frame
        Signed difference map; its support mask is the analysis region.
    h : float
        Kernel bandwidth in pixels.
    kernel : str
        "tgauss" (Gaussian with scale h/3, truncated at h) or "tricube"
        (support h).  At h = 3 the weight covers the 28 neighbors within
        three pixels of the target.
    dense_trace_limit : int
        Above this many masked pixels, delta2 is estimated by seeded
        Hutchinson probes instead of an exact sparse product.
    """
    if h <= 0:
        raise ConfigError("bandwidth must be positive")
    mask = diff.support_mask if diff.support_mask is not None else np.ones(diff.shape, bool)
    n = int(mask.sum())
    if n == 0:
        raise DataError("empty analysis region")
    rows, cols = diff.shape
    pr, pc = np.nonzero(mask)                      # row-major masked pixels
    flat_index = np.full(mask.shape, -1, dtype=np.int64)
    flat_index[pr, pc] = np.arange(n)
    y = diff.values[pr, pc]

    dr, dc, w = _kernel_offsets(h, kernel)
    k = dr.size
    # design over offsets is shared by every pixel
    X = np.column_stack([np.ones(k), dr, dc, 0.5 * dr ** 2, 0.5 * dc ** 2, dr * dc])

    nr = pr[:, None] + dr[None, :]
    nc = pc[:, None] + dc[None, :]
    inside = (nr >= 0) & (nr < rows) & (nc >= 0) & (nc < cols)
    nidx = np.where(inside, flat_index[np.clip(nr, 0, rows - 1), np.clip(nc, 0, cols - 1)], -1)
    valid = nidx >= 0
    wts = np.where(valid, w[None, :], 0.0)         # (n, k)

    n_pos = (wts > 0).sum(axis=1)
    if (n_pos < 6).any():
        bad = [(int(pr[i]), int(pc[i])) for i in np.nonzero(n_pos < 6)[0][:8]]
        raise NumericError(f"fewer than 6 weighted neighbors at pixels {bad}")

    A = np.einsum("pk,ki,kj->pij", wts, X, X, optimize=True)
    # per-pixel conditioning check, reported with coordinates
    ev = np.linalg.eigvalsh(A)
    bad = ev[:, 0] <= 1e-10 * np.maximum(ev[:, -1], 1e-300)
    if bad.any():
        where = [(int(pr[i]), int(pc[i])) for i in np.nonzero(bad)[0][:8]]
        raise NumericError(f"rank-deficient local design at pixels {where}")
    e1 = np.zeros((n, 6))
    e1[:, 0] = 1.0
    coef = np.linalg.solve(A, e1[..., None])[..., 0]      # rows of A^{-1} e1
    hat_w = wts * (coef @ X.T)                            # (n, k) hat weights

    ygrab = np.where(valid, y[np.clip(nidx, 0, n - 1)], 0.0)
    m_hat_vec = (hat_w * ygrab).sum(axis=1)
    hat_norm_vec = np.sqrt((hat_w * hat_w).sum(axis=1))

    rows_idx = np.repeat(np.arange(n), k)[valid.ravel()]
    cols_idx = nidx.ravel()[valid.ravel()]
    data = hat_w.ravel()[valid.ravel()]
    L = sp.csr_matrix((data, (rows_idx, cols_idx)), shape=(n, n))

    resid = y - m_hat_vec
    rss = float(resid @ resid)

    tr_l = float(L.diagonal().sum())
    fro_l2 = float((L.data * L.data).sum())
    delta1 = n - 2.0 * tr_l + fro_l2
    if n <= dense_trace_limit:
        M = sp.identity(n, format="csr") - L
        lam = (M.T @ M).tocsr()
        delta2 = float((lam.data * lam.data).sum())
        method = "dense"
    else:
        rng = np.random.default_rng(trace_seed)
        probes = max(int(trace_probes), 64)
        est = 0.0
        M = sp.identity(n, format="csr") - L
        for _ in range(probes):
            z = rng.integers(0, 2, size=n).astype(np.float64) * 2.0 - 1.0
            lz = M.T @ (M @ z)
            est += float(lz @ lz)
        delta2 = est / probes
        method = "hutchinson"
    if delta1 <= 1e-9:
        raise NumericError("no residual degrees of freedom (interpolating fit)")

    m_hat = np.full(diff.shape, np.nan)
    m_hat[pr, pc] = m_hat_vec
    hat_norm = np.full(diff.shape, np.nan)
    hat_norm[pr, pc] = hat_norm_vec
    sigma_hat = float(np.sqrt(rss / delta1))
    return SmoothFit(m_hat, hat_norm, sigma_hat, float(delta1), float(delta2), rss,
                     float(h), kernel, mask.copy(), L, np.column_stack([pr, pc]), method)


def residual_traces(L: np.ndarray) -> Tuple[float, float]:
    """delta1 = tr((I-L)'(I-L)) and delta2 = tr([(I-L)'(I-L)]^2) for a dense hat matrix."""
    L = np.asarray(L, dtype=np.float64)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise DataError("hat matrix must be square")
    m = np.eye(L.shape[0]) - L
    lam = m.T @ m
    return float(np.trace(lam)), float((lam * lam).sum())


def degrees_of_freedom(fit: SmoothFit) -> Tuple[float, float]:
    """The residual traces of a fit; errors if no residual df remain."""
    if fit.delta1 <= 1e-9 or fit.delta2 <= 0:
        raise NumericError("no residual degrees of freedom (interpolating fit)")
    return fit.delta1, fit.delta2


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------


def t_map(fit: SmoothFit) -> TMap:
    """Per-pixel t = m_hat / (sigma_hat ||p||), df = delta1^2/delta2."""
    d1, d2 = degrees_of_freedom(fit)
    if fit.sigma_hat == 0.0:
        raise NumericError("sigma_hat is zero (noiseless data); no t-map produced")
    vals = np.full(fit.mask.shape, np.nan)
    vals[fit.mask] = fit.m_hat[fit.mask] / (fit.sigma_hat * fit.hat_norm[fit.mask])
    return TMap(vals, float(d1 * d1 / d2), fit.mask.copy())


def restrict_tmap(tmap: TMap, mask: np.ndarray) -> TMap:
    """Chop a t-map to a sub-mask (drops padded rim estimates)."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != tmap.mask.shape:
        raise DataError("mask shape mismatch")
    if (mask & ~tmap.mask).any():
        raise DataError("restriction mask extends outside the fitted region")
    vals = np.where(mask, tmap.values, np.nan)
    return TMap(vals, tmap.df, mask)


def p_map(tmap: TMap, two_sided: bool = False) -> np.ndarray:
    """Upper-tail (or two-sided) t-distribution p-values, NaN off the mask."""
    p = np.full(tmap.mask.shape, np.nan)
    tv = tmap.values[tmap.mask]
    if two_sided:
        p[tmap.mask] = 2.0 * student_t.sf(np.abs(tv), df=tmap.df)
    else:
        p[tmap.mask] = student_t.sf(tv, df=tmap.df)
    return p


def bh_adjust(pvalues, config: FdrConfig = FdrConfig()) -> Tuple[np.ndarray, float]:
    """Step-up FDR screen; returns (rejected mask, critical p).

    Finds k = max{ i : p_(i) <= i*q/(m*c) } with c = 1 ("bh") or
    c = sum_{i=1}^m 1/i ("by") and rejects the k smallest p-values;
    critical_p is k*q/(m*c), or 0 when nothing is rejected.
    """
    p = np.asarray(pvalues, dtype=np.float64).ravel()
    if p.size == 0:
        raise DataError("empty p-value list")
    if np.isnan(p).any() or (p < 0).any() or (p > 1).any():
        raise DataError("p-values must lie in [0, 1]")
    m = p.size
    c = 1.0 if config.mode == "bh" else math.fsum(1.0 / i for i in range(1, m + 1))
    ps = np.sort(p)
    thresh = np.arange(1, m + 1) * config.q / (m * c)
    ok = np.nonzero(ps <= thresh)[0]
    if ok.size == 0:
        return np.zeros(m, dtype=bool), 0.0
    k = int(ok[-1]) + 1
    critical = float(k * config.q / (m * c))
    return p <= critical, critical


def fdr_map(pvalues: np.ndarray, rejections: np.ndarray, critical_p: float = 0.0) -> PMap:
    """Assemble the P-map: 1 - p where rejected, 0 elsewhere."""
    p = np.asarray(pvalues, dtype=np.float64)
    rej = np.asarray(rejections, dtype=bool)
    if p.shape != rej.shape:
        raise DataError("p-value grid and rejection grid differ in shape")
    if rej.any() and np.isnan(p[rej]).any():
        raise DataError("rejected pixel without a p-value")
    vals = np.zeros(p.shape)
    vals[rej] = 1.0 - p[rej]
    mask = ~np.isnan(p)
    return PMap(vals, float(critical_p), int(rej.sum()), mask)


def prds_covariance_check(fit: SmoothFit, pairs) -> float:
    """Minimum normalized hat-row inner product over sampled pixel pairs.

    The covariance of the smoothed field at two pixels is proportional to
    p(x_i) . p(x_j) / (||p(x_i)|| ||p(x_j)||); nonnegative values support
    the positive-dependence premise of the BH screen.  ``pairs`` is a
    sequence of ((r1, c1), (r2, c2)) masked pixel coordinates.
    """
    idx = np.full(fit.mask.shape, -1, dtype=np.int64)
    idx[fit.pixels[:, 0], fit.pixels[:, 1]] = np.arange(fit.pixels.shape[0])
    lo = np.inf
    L = fit.hat
    for (r1, c1), (r2, c2) in pairs:
        i, j = int(idx[r1, c1]), int(idx[r2, c2])
        if i < 0 or j < 0:
            raise DataError(f"pair (({r1},{c1}),({r2},{c2})) not inside the fitted mask")
        ri = L.getrow(i)
        rj = L.getrow(j)
        num = float(ri.multiply(rj).sum())
        den = float(np.sqrt((ri.multiply(ri)).sum() * (rj.multiply(rj)).sum()))
        val = num / den if den > 0 else 0.0
        lo = min(lo, val)
    if not np.isfinite(lo):
        raise DataError("no pairs supplied")
    return float(lo)
