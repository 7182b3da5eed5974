"""Spectral statistics over sampled spectra.

Density of states against the semicircle law, unfolded pair
correlations against the sine-kernel form, smoothed two-point
estimators built from resolvent traces, determinant-ratio boundary
identities, and nearest-neighbor spacings. Every estimator is a fold
over independent spectra, so partial results merge exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SQRT2 = math.sqrt(2.0)


def semicircle_density(lam):
    """(1/2pi) sqrt(4 - lam^2) on [-2, 2], zero outside."""
    lam = np.asarray(lam, dtype=float)
    out = np.zeros_like(lam)
    inside = np.abs(lam) <= 2.0
    out[inside] = np.sqrt(4.0 - lam[inside] ** 2) / (2.0 * math.pi)
    return float(out) if out.ndim == 0 else out


def semicircle_cdf(lam):
    """Integrated semicircle density from the lower band edge."""
    lam = np.asarray(lam, dtype=float)
    x = np.clip(lam, -2.0, 2.0)
    out = (x * np.sqrt(4.0 - x * x) / 4.0 + np.arcsin(x / 2.0)) / math.pi + 0.5
    return float(out) if out.ndim == 0 else out


def sine_kernel_prediction(s):
    """1 - sin^2(pi s)/(pi s)^2 with the removable zero at s = 0."""
    s = np.asarray(s, dtype=float)
    out = 1.0 - np.sinc(s) ** 2
    return float(out) if out.ndim == 0 else out


def wigner_surmise_pdf(s):
    s = np.asarray(s, dtype=float)
    out = (32.0 / math.pi**2) * s * s * np.exp(-4.0 * s * s / math.pi)
    return float(out) if out.ndim == 0 else out


def wigner_surmise_cdf(s):
    from scipy.special import erf

    s = np.asarray(s, dtype=float)
    out = erf(2.0 * s / math.sqrt(math.pi)) - (4.0 * s / math.pi) * np.exp(
        -4.0 * s * s / math.pi
    )
    return float(out) if out.ndim == 0 else out


def ks_statistic(values, cdf) -> float:
    """Sup-distance between the empirical CDF of ``values`` and ``cdf``."""
    x = np.sort(np.asarray(values, dtype=float))
    n = x.shape[0]
    if n == 0:
        raise ValueError("ks_statistic needs at least one value")
    f = np.asarray(cdf(x), dtype=float)
    hi = np.arange(1, n + 1) / n - f
    lo = f - np.arange(0, n) / n
    return float(max(hi.max(), lo.max()))


# ---------------------------------------------------------------------------
# density of states


@dataclass(frozen=True)
class DosEstimate:
    edges: np.ndarray
    counts: np.ndarray
    samples: int

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        counts = np.asarray(self.counts, dtype=np.int64)
        if edges.ndim != 1 or edges.shape[0] < 2 or np.any(np.diff(edges) <= 0):
            raise ValueError("edges must be a strictly increasing 1-d array")
        if counts.shape != (edges.shape[0] - 1,) or np.any(counts < 0):
            raise ValueError("counts must be nonnegative, one per bin")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "counts", counts)

    @property
    def density(self) -> np.ndarray:
        """Histogram density normalized over the in-range eigenvalues."""
        total = int(self.counts.sum())
        if total == 0:
            raise ValueError("no eigenvalues fell inside the bins")
        widths = np.diff(self.edges)
        return self.counts / (total * widths)


def estimate_dos(spectra, edges) -> DosEstimate:
    spectra = list(spectra)
    if not spectra:
        raise ValueError("estimate_dos needs at least one spectrum")
    edges = np.asarray(edges, dtype=float)
    counts = np.zeros(edges.shape[0] - 1, dtype=np.int64)
    for s in spectra:
        c, _ = np.histogram(s.values, bins=edges)
        counts += c
    return DosEstimate(edges=edges, counts=counts, samples=len(spectra))


def merge_dos(a: DosEstimate, b: DosEstimate) -> DosEstimate:
    if a.edges.shape != b.edges.shape or not np.array_equal(a.edges, b.edges):
        raise ValueError("cannot merge DOS estimates with different bins")
    return DosEstimate(
        edges=a.edges, counts=a.counts + b.counts, samples=a.samples + b.samples
    )


# ---------------------------------------------------------------------------
# pair correlations


@dataclass(frozen=True)
class CorrelationEstimate:
    lam0: float
    grid: np.ndarray
    r2_hat: np.ndarray
    stderr: np.ndarray
    samples: int
    estimator: str
    eps_n: tuple | None = None
    low_statistics: bool = False

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        r2 = np.asarray(self.r2_hat, dtype=float)
        se = np.asarray(self.stderr, dtype=float)
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if r2.shape != grid.shape or se.shape != grid.shape:
            raise ValueError("r2_hat and stderr must match the grid shape")
        if np.any(se < 0):
            raise ValueError("stderr must be nonnegative")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.estimator not in ("pair-histogram", "smoothed-F2"):
            raise ValueError(f"unknown estimator tag {self.estimator!r}")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "r2_hat", r2)
        object.__setattr__(self, "stderr", se)


def _batch_edges(n_samples: int, batches: int) -> np.ndarray:
    b = max(1, min(batches, n_samples))
    return np.linspace(0, n_samples, b + 1).astype(int)


def estimate_R2_pairs(
    spectra, lam0: float, window: float, bins, batches: int = 50
) -> CorrelationEstimate:
    """Histogram of unfolded pair separations around ``lam0``.

    Separations s = N rho(lam0) (lam_i - lam_j) are collected for
    unordered pairs with both eigenvalues inside +-window mean spacings
    of lam0. Each bin is normalized by the exact expected pair count of
    a unit-density Poisson process in the same window, so the null
    returns 1. Standard errors come from contiguous batch means.
    """
    spectra = list(spectra)
    if not spectra:
        raise ValueError("estimate_R2_pairs needs at least one spectrum")
    if not abs(lam0) < SQRT2:
        raise ValueError(f"|lam0| must be < sqrt(2), got {lam0}")
    if window <= 0.0:
        raise ValueError("window must be positive")
    n_min = min(s.N for s in spectra)
    if window > 0.05 * n_min:
        raise ValueError(
            f"window {window} exceeds 0.05 N = {0.05 * n_min} mean spacings"
        )
    edges = np.asarray(bins, dtype=float)
    if edges.ndim != 1 or edges.shape[0] < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bins must be strictly increasing edges")
    if edges[0] < 0.0:
        raise ValueError("separation bins start at s >= 0")
    length = 2.0 * window
    if edges[-1] >= length:
        raise ValueError("largest bin edge must stay below the window diameter")
    rho = semicircle_density(lam0)

    # Poisson expectation per bin: integral of (L - s) over the bin.
    a, b = edges[:-1], edges[1:]
    area = (b - a) * length - (b * b - a * a) / 2.0

    per_spectrum = np.zeros((len(spectra), edges.shape[0] - 1))
    for i, s in enumerate(spectra):
        halfw = window / (s.N * rho)
        sel = s.values[np.abs(s.values - lam0) <= halfw]
        if sel.shape[0] < 2:
            continue
        u = s.N * rho * (sel - lam0)
        seps = np.abs(u[:, None] - u[None, :])[np.triu_indices(u.shape[0], k=1)]
        per_spectrum[i], _ = np.histogram(seps, bins=edges)

    n = len(spectra)
    r2 = per_spectrum.sum(axis=0) / (n * area)
    be = _batch_edges(n, batches)
    bm = np.array(
        [
            per_spectrum[lo:hi].sum(axis=0) / ((hi - lo) * area)
            for lo, hi in zip(be[:-1], be[1:])
        ]
    )
    nb = bm.shape[0]
    stderr = bm.std(axis=0, ddof=1) / math.sqrt(nb) if nb > 1 else np.zeros_like(r2)
    total_pairs = float(per_spectrum.sum())
    return CorrelationEstimate(
        lam0=lam0,
        grid=(a + b) / 2.0,
        r2_hat=r2,
        stderr=stderr,
        samples=n,
        estimator="pair-histogram",
        low_statistics=total_pairs < 10.0 * (edges.shape[0] - 1),
    )


# ---------------------------------------------------------------------------
# smoothed two-point estimator


def _f2_values(values: np.ndarray, N: int, rho: float, x1, x2, eta, include_self):
    """Normalized product of centered resolvent differences.

    x1, x2, eta broadcast against each other; returns that shape. The
    product of the two purely imaginary trace differences divided by
    (2 pi i N rho)^2 reduces to q1 q2 / (pi N rho)^2 with q the
    half-width-eta Poisson sums over the spectrum.
    """
    gx1, gx2, geta = np.broadcast_arrays(
        np.asarray(x1, float), np.asarray(x2, float), np.asarray(eta, float)
    )
    shape = gx1.shape
    x1f, x2f, ef = gx1.ravel(), gx2.ravel(), geta.ravel()
    lam = values[:, None]
    d1 = (lam - x1f) ** 2 + ef**2
    d2 = (lam - x2f) ** 2 + ef**2
    q1 = (ef / d1).sum(axis=0)
    q2 = (ef / d2).sum(axis=0)
    prod = q1 * q2
    if not include_self:
        prod = prod - (ef**2 / (d1 * d2)).sum(axis=0)
    out = prod / (math.pi * N * rho) ** 2
    return out.reshape(shape) if shape else float(out[0])


def estimate_F2(
    spectra, lam0: float, xi1: float, xi2: float, eps: float, include_self: bool = True
) -> complex:
    """Sample mean of Tr(G(z1) - G(zbar1)) Tr(G(z2) - G(zbar2)) / (2 pi i N rho)^2
    at z_s = lam0 + (xi_s / rho + i eps)/N.

    include_self=False drops the diagonal i = j terms of the double
    eigenvalue sum; at desk-scale eps those contribute an order-one
    Poisson-kernel bump that vanishes only in the eps -> 0 limit.
    """
    spectra = list(spectra)
    if not spectra:
        raise ValueError("estimate_F2 needs at least one spectrum")
    if eps <= 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    rho = semicircle_density(lam0)
    if rho == 0.0:
        raise ValueError("lam0 must lie strictly inside the band")
    acc = 0.0
    for s in spectra:
        x1 = lam0 + xi1 / (s.N * rho)
        x2 = lam0 + xi2 / (s.N * rho)
        acc += _f2_values(s.values, s.N, rho, x1, x2, eps / s.N, include_self)
    return complex(acc / len(spectra))


def richardson_weights(nodes) -> np.ndarray:
    """Weights eliminating the first len(nodes)-1 powers of the node scale."""
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim != 1 or nodes.shape[0] < 1:
        raise ValueError("nodes must be a 1-d array")
    if np.unique(nodes).shape[0] != nodes.shape[0] or np.any(nodes <= 0):
        raise ValueError("nodes must be positive and distinct")
    w = np.empty_like(nodes)
    for i, x in enumerate(nodes):
        others = np.delete(nodes, i)
        w[i] = np.prod(others / (others - x))
    return w


def f2_correlation_curve(
    spectra,
    lam0: float,
    grid,
    eps_spacings=(0.5, 1.0, 2.0),
    include_self: bool = False,
    extrapolate: bool = True,
    batches: int = 50,
) -> CorrelationEstimate:
    """Smoothed two-point curve over separations ``grid``.

    Probes sit at xi = +-s/2 around lam0. eps_spacings lists the
    smoothing half-widths in units of the local mean spacing; with
    extrapolate=True the per-spectrum values at all widths are combined
    with Richardson weights to cancel the leading smoothing bias,
    otherwise a single width is required and reported as-is.
    """
    spectra = list(spectra)
    if not spectra:
        raise ValueError("f2_correlation_curve needs at least one spectrum")
    if not abs(lam0) < SQRT2:
        raise ValueError(f"|lam0| must be < sqrt(2), got {lam0}")
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    eps_sp = np.asarray(eps_spacings, dtype=float)
    if extrapolate:
        weights = richardson_weights(eps_sp)
    elif eps_sp.shape[0] != 1:
        raise ValueError("extrapolate=False requires exactly one eps value")
    else:
        weights = np.ones(1)
    rho = semicircle_density(lam0)
    eps_raw = eps_sp / rho  # eta = eps_raw / N is eps_sp mean spacings

    per_spectrum = np.zeros((len(spectra), grid.shape[0]))
    for i, s in enumerate(spectra):
        delta = grid[:, None] / (2.0 * s.N * rho)
        vals = _f2_values(
            s.values,
            s.N,
            rho,
            lam0 + delta,
            lam0 - delta,
            eps_raw[None, :] / s.N,
            include_self,
        )
        per_spectrum[i] = vals @ weights

    n = len(spectra)
    est = per_spectrum.mean(axis=0)
    be = _batch_edges(n, batches)
    bm = np.array([per_spectrum[lo:hi].mean(axis=0) for lo, hi in zip(be[:-1], be[1:])])
    nb = bm.shape[0]
    stderr = bm.std(axis=0, ddof=1) / math.sqrt(nb) if nb > 1 else np.zeros_like(est)
    return CorrelationEstimate(
        lam0=lam0,
        grid=grid,
        r2_hat=est,
        stderr=stderr,
        samples=n,
        estimator="smoothed-F2",
        eps_n=tuple(float(e) for e in eps_sp),
    )


# ---------------------------------------------------------------------------
# determinant-ratio boundary identities


def _g2_samples(spectra, lam0, eps, xi1, xi2, xi1p, xi2p, variant) -> np.ndarray:
    if variant not in ("+-", "++"):
        raise ValueError(f"variant must be '+-' or '++', got {variant!r}")
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")
    rho = semicircle_density(lam0)
    if rho == 0.0:
        raise ValueError("lam0 must lie strictly inside the band")
    out = np.empty(len(spectra), dtype=complex)
    for i, s in enumerate(spectra):
        z1, z2, z1p, z2p = (
            lam0 + (xi / rho + 1j * eps) / s.N for xi in (xi1, xi2, xi1p, xi2p)
        )
        if variant == "+-":
            pairs = ((z1p, z1), (np.conj(z2p), np.conj(z2)))
        else:
            pairs = ((z1p, z1), (z2p, z2))
        lam = s.values
        total = 0.0
        for znum, zden in pairs:
            if znum == zden:
                continue  # identical factors cancel exactly
            num = lam - znum
            den = lam - zden
            if np.any(num == 0.0) or np.any(den == 0.0):
                raise ValueError("factor underflow: eigenvalue collides with a probe")
            # ratio of two same-half-plane factors never crosses the cut
            total = total + np.log(num / den).sum()
        out[i] = np.exp(total)
    return out


def estimate_G2(
    spectra,
    lam0: float,
    eps: float,
    xi1: float,
    xi2: float,
    xi1p: float,
    xi2p: float,
    variant: str = "+-",
) -> complex:
    """Sample mean of det(H - z1')det(H - w2') / det(H - z1)det(H - w2),
    with w = zbar for the '+-' variant and w = z for '++'."""
    spectra = list(spectra)
    if not spectra:
        raise ValueError("estimate_G2 needs at least one spectrum")
    vals = _g2_samples(spectra, lam0, eps, xi1, xi2, xi1p, xi2p, variant)
    return complex(vals.mean())


@dataclass(frozen=True)
class G2Derivative:
    value: complex
    stderr: float
    samples: int


def g2_boundary_derivative(
    spectra, lam0: float, eps: float, h: float = 0.05
) -> G2Derivative:
    """Central difference of the '+-' ratio in the first primed offset
    at the coincidence point, averaged over samples."""
    spectra = list(spectra)
    if not spectra:
        raise ValueError("g2_boundary_derivative needs at least one spectrum")
    if h <= 0.0:
        raise ValueError("h must be positive")
    up = _g2_samples(spectra, lam0, eps, 0.0, 0.0, h, 0.0, "+-")
    dn = _g2_samples(spectra, lam0, eps, 0.0, 0.0, -h, 0.0, "+-")
    d = (up - dn) / (2.0 * h)
    n = d.shape[0]
    if n > 1:
        se = math.sqrt((d.real.var(ddof=1) + d.imag.var(ddof=1)) / n)
    else:
        se = 0.0
    return G2Derivative(value=complex(d.mean()), stderr=se, samples=n)


# ---------------------------------------------------------------------------
# spacings


def spacing_samples(spectra, lam0: float, window: float) -> np.ndarray:
    """Unfolded consecutive gaps around lam0, normalized to unit mean.

    Eigenvalues are unfolded with the exact semicircle CDF; gaps are
    kept when both endpoints lie within +-window mean spacings of lam0.
    """
    spectra = list(spectra)
    if not spectra:
        raise ValueError("spacing_samples needs at least one spectrum")
    if window <= 0.0:
        raise ValueError("window must be positive")
    rho = semicircle_density(lam0)
    if rho == 0.0:
        raise ValueError("lam0 must lie strictly inside the band")
    gaps = []
    for s in spectra:
        halfw = window / (s.N * rho)
        sel = np.sort(s.values[np.abs(s.values - lam0) <= halfw])
        if sel.shape[0] < 2:
            continue
        u = s.N * semicircle_cdf(sel)
        gaps.append(np.diff(u))
    if not gaps:
        raise ValueError("no gaps found in the window")
    out = np.concatenate(gaps)
    return out / out.mean()


@dataclass(frozen=True)
class SpacingEstimate:
    edges: np.ndarray
    density: np.ndarray
    n_gaps: int
    samples: int


def spacing_distribution(
    spectra, lam0: float, window: float, bins=None
) -> SpacingEstimate:
    spectra = list(spectra)
    gaps = spacing_samples(spectra, lam0, window)
    edges = np.linspace(0.0, 4.0, 41) if bins is None else np.asarray(bins, float)
    counts, _ = np.histogram(gaps, bins=edges)
    density = counts / (gaps.shape[0] * np.diff(edges))
    return SpacingEstimate(
        edges=edges, density=density, n_gaps=int(gaps.shape[0]), samples=len(spectra)
    )
