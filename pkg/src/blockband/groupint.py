"""Quadrature and closed forms for integrals over U(2)/U(1)^2 and U(1,1)/U(1)^2.

The compact coset is parameterized by (v, theta) with

    U = [[w, v e^{i theta}], [-v e^{-i theta}, w]],   w = sqrt(1 - v^2),

and normalized measure dtheta/(2 pi) * 2v dv on v in [0, 1]. The
noncompact coset uses (t, sigma) with

    T = [[s, t e^{i sigma}], [t e^{-i sigma}, s]],    s = sqrt(1 + t^2),

and measure dsigma/(2 pi) * 2t dt on t in [0, infinity); T preserves the
signature matrix diag(1, -1). The exponential-of-trace integrals over
both cosets have rank-one closed forms (Harish-Chandra/Itzykson-Zuber
type); quadrature here exists to cross-check those closed forms and to
evaluate boundary integrals that are not of the pure exponential form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GroupElement2x2",
    "u2_matrix",
    "u11_matrix",
    "quad_u2",
    "hciz_u2",
    "quad_u11",
    "hciz_u11",
]

_DEGENERATE_THRESHOLD = 1e-8


def u2_matrix(v: float, theta: float) -> np.ndarray:
    w = np.sqrt(1.0 - v * v)
    e = np.exp(1j * theta)
    return np.array([[w, v * e], [-v / e, w]])


def u11_matrix(t: float, sigma: float) -> np.ndarray:
    s = np.sqrt(1.0 + t * t)
    e = np.exp(1j * sigma)
    return np.array([[s, t * e], [t / e, s]])


@dataclass(frozen=True)
class GroupElement2x2:
    """A coset element; kind 'compact' carries (v, theta), 'noncompact' (t, sigma)."""

    kind: str
    p: float
    angle: float

    def __post_init__(self):
        if self.kind not in ("compact", "noncompact"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.kind == "compact" and not 0.0 <= self.p <= 1.0:
            raise ValueError(f"v must lie in [0, 1], got {self.p}")
        if self.kind == "noncompact" and self.p < 0.0:
            raise ValueError(f"t must be >= 0, got {self.p}")

    def matrix(self) -> np.ndarray:
        if self.kind == "compact":
            return u2_matrix(self.p, self.angle)
        return u11_matrix(self.p, self.angle)


def _radial_nodes(lo: float, hi: float, n: int):
    # Gauss-Legendre in the squared radius, where the measure 2r dr is flat
    x, w = np.polynomial.legendre.leggauss(n)
    x2 = lo**2 + (hi**2 - lo**2) * (x + 1.0) / 2.0
    return np.sqrt(x2), w * (hi**2 - lo**2) / 2.0


def quad_u2(f, n_theta: int = 64, n_v: int = 48) -> complex:
    """Integrate f(GroupElement2x2) over the compact coset, unit normalized."""
    vs, vw = _radial_nodes(0.0, 1.0, n_v)
    thetas = 2.0 * np.pi * np.arange(n_theta) / n_theta
    total = 0.0 + 0.0j
    for v, wv in zip(vs, vw):
        for th in thetas:
            total += wv * f(GroupElement2x2("compact", v, th))
    return total / n_theta


def _phi(w: complex) -> complex:
    # (e^w - 1)/w with its removable singularity
    if abs(w) < _DEGENERATE_THRESHOLD:
        return 1.0 + w / 2.0 + w * w / 6.0
    return (np.exp(w) - 1.0) / w


def _diag2(x) -> tuple[complex, complex]:
    x = np.asarray(x)
    if x.shape == (2, 2):
        return complex(x[0, 0]), complex(x[1, 1])
    if x.shape == (2,):
        return complex(x[0]), complex(x[1])
    raise ValueError(f"expected a diagonal 2x2 matrix or a 2-vector, got shape {x.shape}")


def hciz_u2(C, D, r: complex) -> complex:
    """Closed form of int exp(r Tr C U* D U) dmu(U) for diagonal C, D.

    Equals (e^{r(c1 d1 + c2 d2)} - e^{r(c1 d2 + c2 d1)}) / (r (c1-c2)(d1-d2)),
    with the L'Hopital limit when the denominator degenerates.
    """
    c1, c2 = _diag2(C)
    d1, d2 = _diag2(D)
    w = r * (c1 - c2) * (d1 - d2)
    return np.exp(r * (c1 * d2 + c2 * d1)) * _phi(w)


def quad_u11(f, n_sigma: int = 64, n_t: int = 48, t_cutoff: float = 20.0) -> complex:
    """Integrate f(GroupElement2x2) over the noncompact coset.

    The t half-line is truncated at t_cutoff and covered by geometric
    panels resolving both the origin and the tail. A non-decaying
    integrand is detected by comparing the [t_cutoff, 2 t_cutoff] tail
    panel against the accumulated value.
    """
    sigmas = 2.0 * np.pi * np.arange(n_sigma) / n_sigma

    def panel(lo, hi):
        ts, tw = _radial_nodes(lo, hi, n_t)
        acc = 0.0 + 0.0j
        for t, wt in zip(ts, tw):
            for sg in sigmas:
                acc += wt * f(GroupElement2x2("noncompact", t, sg))
        return acc / n_sigma

    # sqrt(2)-geometric panels keep the phase of oscillatory integrands
    # resolvable by the per-panel Gauss rule out to where decay takes over
    edges = [0.0, 0.5]
    while edges[-1] < t_cutoff:
        edges.append(min(np.sqrt(2.0) * edges[-1], t_cutoff))
    total = sum(panel(lo, hi) for lo, hi in zip(edges, edges[1:]))
    tail = panel(t_cutoff, 2.0 * t_cutoff)
    if abs(tail) > max(1e-9, 1e-8 * abs(total)):
        raise ValueError(
            f"integrand does not decay on the noncompact coset (tail {abs(tail):.3g})"
        )
    return total + tail


def hciz_u11(C, D, r: complex) -> complex:
    """Closed form of int exp(-r Tr C T^{-1} D T) dnu(T) for diagonal C, D.

    Valid when Re r (c1-c2)(d1-d2) > 0; the integral diverges otherwise
    (boundary equality included) and is rejected.
    """
    c1, c2 = _diag2(C)
    d1, d2 = _diag2(D)
    w = r * (c1 - c2) * (d1 - d2)
    if w.real <= 0.0:
        raise ValueError(
            f"Re r(c1-c2)(d1-d2) = {w.real:.3g} <= 0: the coset integral diverges"
        )
    return np.exp(-r * (c1 * d1 + c2 * d2)) / w
