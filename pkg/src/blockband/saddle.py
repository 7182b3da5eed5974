"""Spectral constants and the coset functionals behind the pair statistics.

The large-block analysis of the ensemble rests on three real-positive
functionals over per-site coset coordinates: a phase functional over
angles on the unit circle with a compact U(2) coset, a radial functional
over radii on two fixed rays with a noncompact U(1,1) coset, and a ray
functional with both columns on a single ray. Their minima sit on an
explicit finite family of configurations. This module evaluates the
functionals, enumerates and verifies the minimizing configurations,
computes the associated 4|L| x 4|L| determinant and its expansion
coefficients, and assembles the closed-form two-point consistency
identity that the Monte Carlo estimators are compared against.

Conventions carried throughout:

* ``root_plus``/``root_minus`` are the unit-modulus roots of
  w**2 - 1j*lambda0*w - 1; their phases are +phi and pi - phi with
  sin(phi) = lambda0/2.
* Logarithms follow the integration ray of each coordinate, so the
  second radial column uses phase pi - phi even when that leaves the
  principal branch; angle coordinates are wrapped to (-pi, pi].
* Site actions are recentred so that every functional vanishes exactly
  at its minimizing configuration. The real part of the recentring
  constant is ``action_shift``.
"""

from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .groupint import hciz_u2, hciz_u11
from .lattice import Lattice, laplacian

__all__ = [
    "SpectralConstants",
    "spectral_constants",
    "SaddleCoordinates",
    "random_coordinates",
    "SaddlePointLabel",
    "enumerate_saddle_labels",
    "label_coordinates",
    "label_matrices",
    "eval_phase_functional",
    "eval_radial_functional",
    "eval_ray_functional",
    "scan_functional",
    "FunctionalMinimum",
    "minimize_functional",
    "superdeterminant",
    "superdeterminant_factors",
    "saddle_derivative_check",
    "compact_coset_average",
    "noncompact_coset_average",
    "compact_offset_response",
    "noncompact_offset_response",
    "ExpansionCoefficients",
    "saddle_expansion_coefficients",
    "closure_constant",
    "closure_identity",
]

_FUNCTIONALS = ("phase", "radial", "ray")


# ---------------------------------------------------------------------------
# spectral constants


@dataclass(frozen=True, eq=False)
class SpectralConstants:
    """Derived constants at a bulk energy, shared by every saddle routine.

    ``zeta*`` are the complex spectral offsets in units of 1/N, so the
    probe energies of a size-N matrix are ``z1(N) = lambda0 + zeta1/N``
    and so on. ``half_separation`` is the (complex, epsilon-shifted)
    half-distance of the two probes in local mean-spacing units.
    """

    lambda0: float
    eps: float
    xi1: float
    xi2: float
    xi1p: float
    xi2p: float
    n_sites: int
    alpha: float | None
    lattice: Lattice | None
    root_plus: complex
    root_minus: complex
    root_gap: float
    density: float
    root_angle: float
    half_separation: complex
    action_plus: complex
    action_minus: complex
    action_shift: float
    zeta1: complex
    zeta2: complex
    zeta1p: complex
    zeta2p: complex
    offsets: np.ndarray
    offsets_first_primed: np.ndarray
    offsets_second_primed: np.ndarray
    signature: np.ndarray
    diag_pm: np.ndarray
    diag_mp: np.ndarray
    diag_plus: np.ndarray
    diag_minus: np.ndarray
    hessian_plus: np.ndarray | None
    hessian_minus: np.ndarray | None

    def z1(self, N: int) -> complex:
        return self.lambda0 + self.zeta1 / N

    def z2(self, N: int) -> complex:
        return self.lambda0 + self.zeta2 / N

    def z1p(self, N: int) -> complex:
        return self.lambda0 + self.zeta1p / N

    def z2p(self, N: int) -> complex:
        return self.lambda0 + self.zeta2p / N

    @property
    def drive(self) -> np.ndarray:
        """Diagonal of the source matrix i*offsets/density - eps*signature."""
        q1 = 1j * self.xi1 / self.density - self.eps
        q2 = 1j * self.xi2 / self.density + self.eps
        return np.array([q1, q2], dtype=complex)

    def hessian_plus_reduced(self) -> np.ndarray:
        """hessian_plus divided by root_plus**2; pairs with its conjugate."""
        if self.hessian_plus is None:
            raise ValueError("constants were built without a lattice and alpha")
        delta = laplacian(self.lattice)
        return self.alpha * delta + (1.0 + self.root_plus ** (-2)) * np.eye(
            self.n_sites
        )

    def hessian_minus_reduced(self) -> np.ndarray:
        if self.hessian_minus is None:
            raise ValueError("constants were built without a lattice and alpha")
        delta = laplacian(self.lattice)
        return self.alpha * delta + (1.0 + self.root_minus ** (-2)) * np.eye(
            self.n_sites
        )


def spectral_constants(
    lambda0: float,
    eps: float = 0.0,
    xi1: float = 0.0,
    xi2: float = 0.0,
    xi1p: float | None = None,
    xi2p: float | None = None,
    n_sites: int = 1,
    alpha: float | None = None,
    lattice: Lattice | None = None,
) -> SpectralConstants:
    """Build the constant pack for a bulk energy ``lambda0``, |lambda0| < 2.

    ``xi1p``/``xi2p`` default to the unprimed offsets. Passing a lattice
    pins ``n_sites`` to it and, together with ``alpha``, fills in the
    quadratic-form operators at the two roots.
    """
    if not abs(lambda0) < 2.0:
        raise ValueError(f"energy must satisfy |lambda0| < 2, got {lambda0}")
    if eps < 0.0:
        raise ValueError(f"broadening eps must be >= 0, got {eps}")
    if lattice is not None:
        n_sites = lattice.n_sites
    if n_sites < 1:
        raise ValueError(f"n_sites must be >= 1, got {n_sites}")
    if xi1p is None:
        xi1p = xi1
    if xi2p is None:
        xi2p = xi2

    gap = math.sqrt(4.0 - lambda0 * lambda0)
    root_plus = complex(gap / 2.0, lambda0 / 2.0)
    root_minus = complex(-gap / 2.0, lambda0 / 2.0)
    density = gap / (2.0 * math.pi)
    angle = math.asin(lambda0 / 2.0)
    theta = complex((xi2 - xi1) / (2.0 * density), -eps)

    # site action at each root; the second log follows the ray, phase pi - phi
    action_plus = (
        root_plus * root_plus / 2.0 - 1j * lambda0 * root_plus - 1j * angle
    )
    action_minus = (
        root_minus * root_minus / 2.0
        - 1j * lambda0 * root_minus
        - 1j * (math.pi - angle)
    )
    shift = n_sites * (2.0 + lambda0 * lambda0) / 2.0

    checks = (
        abs(root_plus * root_minus + 1.0),
        abs(abs(root_plus) - 1.0),
        abs(abs(root_minus) - 1.0),
        abs(root_plus + root_minus - 1j * lambda0),
        abs(root_plus**2 + root_minus**2 + 2.0 - gap * gap),
        abs(1.0 + 1.0 / (root_plus * root_minus)),
        abs(action_plus.real - (2.0 + lambda0 * lambda0) / 4.0),
        abs(action_minus.real - (2.0 + lambda0 * lambda0) / 4.0),
    )
    if max(checks) > 1e-12:
        raise ArithmeticError("root identities violated beyond rounding")

    hess_p = hess_m = None
    if lattice is not None and alpha is not None:
        delta = laplacian(lattice)
        eye = np.eye(n_sites)
        hess_p = alpha * root_plus**2 * delta + (1.0 + root_plus**2) * eye
        hess_m = alpha * root_minus**2 * delta + (1.0 + root_minus**2) * eye

    return SpectralConstants(
        lambda0=lambda0,
        eps=eps,
        xi1=xi1,
        xi2=xi2,
        xi1p=xi1p,
        xi2p=xi2p,
        n_sites=n_sites,
        alpha=alpha,
        lattice=lattice,
        root_plus=root_plus,
        root_minus=root_minus,
        root_gap=gap,
        density=density,
        root_angle=angle,
        half_separation=theta,
        action_plus=action_plus,
        action_minus=action_minus,
        action_shift=shift,
        zeta1=complex(xi1 / density, eps),
        zeta2=complex(xi2 / density, eps),
        zeta1p=complex(xi1p / density, eps),
        zeta2p=complex(xi2p / density, eps),
        offsets=np.diag([xi1, xi2]).astype(float),
        offsets_first_primed=np.diag([xi1p, xi2]).astype(float),
        offsets_second_primed=np.diag([xi1, xi2p]).astype(float),
        signature=np.diag([1.0, -1.0]),
        diag_pm=np.diag([root_plus, root_minus]),
        diag_mp=np.diag([root_minus, root_plus]),
        diag_plus=root_plus * np.eye(2, dtype=complex),
        diag_minus=root_minus * np.eye(2, dtype=complex),
        hessian_plus=hess_p,
        hessian_minus=hess_m,
    )


# ---------------------------------------------------------------------------
# coordinates and saddle labels


@dataclass(frozen=True, eq=False)
class SaddleCoordinates:
    """Per-site coset coordinates for the three functionals.

    ``u_angles`` (n, 2) are the phases of the two unit-circle columns,
    ``v``/``theta`` parameterize the compact coset, ``b_radii`` (n, 2)
    the two ray radii, ``t``/``sigma`` the noncompact coset. The ray
    functional uses the optional ``a_radii``/``a_v``/``a_theta`` group.
    Site 0 is gauge-fixed: v[0] = t[0] = 0 (and a_v[0] = 0 when given).
    """

    u_angles: np.ndarray
    b_radii: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    t: np.ndarray
    sigma: np.ndarray
    a_radii: np.ndarray | None = None
    a_v: np.ndarray | None = None
    a_theta: np.ndarray | None = None

    def __post_init__(self):
        conv = lambda x: None if x is None else np.asarray(x, dtype=float)
        for name in (
            "u_angles",
            "b_radii",
            "v",
            "theta",
            "t",
            "sigma",
            "a_radii",
            "a_v",
            "a_theta",
        ):
            object.__setattr__(self, name, conv(getattr(self, name)))
        n = self.u_angles.shape[0]
        if self.u_angles.shape != (n, 2) or self.b_radii.shape != (n, 2):
            raise ValueError("u_angles and b_radii must have shape (n_sites, 2)")
        for name in ("v", "theta", "t", "sigma"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have shape (n_sites,)")
        if np.any(self.b_radii < 0.0):
            raise ValueError("radial coordinates must be nonnegative")
        if np.any((self.v < 0.0) | (self.v > 1.0)):
            raise ValueError("compact coset coordinate v must lie in [0, 1]")
        if np.any(self.t < 0.0):
            raise ValueError("noncompact coset coordinate t must be >= 0")
        if self.v[0] != 0.0 or self.t[0] != 0.0:
            raise ValueError("site 0 is gauge-fixed: v[0] and t[0] must be 0")
        if self.a_radii is not None:
            if self.a_radii.shape != (n, 2):
                raise ValueError("a_radii must have shape (n_sites, 2)")
            if np.any(self.a_radii < 0.0):
                raise ValueError("radial coordinates must be nonnegative")
            if self.a_v is None or self.a_theta is None:
                raise ValueError("a_radii requires a_v and a_theta")
            if self.a_v.shape != (n,) or self.a_theta.shape != (n,):
                raise ValueError("a_v and a_theta must have shape (n_sites,)")
            if np.any((self.a_v < 0.0) | (self.a_v > 1.0)) or self.a_v[0] != 0.0:
                raise ValueError("a_v must lie in [0, 1] with a_v[0] = 0")

    @property
    def n_sites(self) -> int:
        return self.u_angles.shape[0]


def random_coordinates(
    n_sites: int,
    rng: np.random.Generator,
    r_low: float = 0.01,
    r_high: float = 5.0,
    t_high: float = 3.0,
) -> SaddleCoordinates:
    """Draw one coordinate point with the gauge zeros at site 0."""
    v = rng.uniform(0.0, 1.0, n_sites)
    t = rng.uniform(0.0, t_high, n_sites)
    av = rng.uniform(0.0, 1.0, n_sites)
    v[0] = t[0] = av[0] = 0.0
    return SaddleCoordinates(
        u_angles=rng.uniform(-math.pi, math.pi, (n_sites, 2)),
        b_radii=rng.uniform(r_low, r_high, (n_sites, 2)),
        v=v,
        theta=rng.uniform(0.0, 2.0 * math.pi, n_sites),
        t=t,
        sigma=rng.uniform(0.0, 2.0 * math.pi, n_sites),
        a_radii=rng.uniform(r_low, r_high, (n_sites, 2)),
        a_v=av,
        a_theta=rng.uniform(0.0, 2.0 * math.pi, n_sites),
    )


@dataclass(frozen=True)
class SaddlePointLabel:
    """One member of the finite minimizing family.

    ``mixed`` labels carry a 0/1 branch per site: branch 0 puts the
    columns at (root_plus, root_minus), branch 1 swaps them, and the
    compact coordinate is pinned to v = 0 on sites sharing site 0's
    branch and v = 1 elsewhere. ``plus``/``minus`` put both columns of
    every site at a single root and leave the compact coset free.
    """

    kind: str
    branches: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("mixed", "plus", "minus"):
            raise ValueError(f"unknown saddle kind {self.kind!r}")
        if self.kind == "mixed":
            if not self.branches or any(b not in (0, 1) for b in self.branches):
                raise ValueError("mixed labels need a 0/1 branch per site")
        elif self.branches is not None:
            raise ValueError(f"{self.kind} labels carry no branches")


def enumerate_saddle_labels(n_sites: int) -> tuple[SaddlePointLabel, ...]:
    """All 2**n mixed branch assignments plus the two uniform labels."""
    mixed = tuple(
        SaddlePointLabel(kind="mixed", branches=bits)
        for bits in itertools.product((0, 1), repeat=n_sites)
    )
    return mixed + (SaddlePointLabel(kind="plus"), SaddlePointLabel(kind="minus"))


def _label_angle_targets(
    label: SaddlePointLabel, k: SpectralConstants, n_sites: int
) -> np.ndarray:
    phi_p = k.root_angle
    phi_m = cmath.phase(k.root_minus)
    if label.kind == "plus":
        return np.full((n_sites, 2), phi_p)
    if label.kind == "minus":
        return np.full((n_sites, 2), phi_m)
    out = np.empty((n_sites, 2))
    for j, b in enumerate(label.branches):
        out[j] = (phi_p, phi_m) if b == 0 else (phi_m, phi_p)
    return out


def label_coordinates(
    label: SaddlePointLabel, k: SpectralConstants, n_sites: int
) -> SaddleCoordinates:
    """Canonical coordinate representative of a label (free v taken as 0)."""
    angles = _label_angle_targets(label, k, n_sites)
    v = np.zeros(n_sites)
    if label.kind == "mixed":
        v = np.array(
            [0.0 if b == label.branches[0] else 1.0 for b in label.branches]
        )
    ray = 1.0 if label.kind == "plus" else None
    return SaddleCoordinates(
        u_angles=angles,
        b_radii=np.ones((n_sites, 2)),
        v=v,
        theta=np.zeros(n_sites),
        t=np.zeros(n_sites),
        sigma=np.zeros(n_sites),
        a_radii=None if ray is None else np.ones((n_sites, 2)),
        a_v=None if ray is None else np.zeros(n_sites),
        a_theta=None if ray is None else np.zeros(n_sites),
    )


def _compact_step(s: float, angle: float) -> np.ndarray:
    w = math.sqrt(1.0 - s * s)
    e = cmath.exp(1j * angle)
    return np.array([[w, s * e], [-s / e, w]], dtype=complex)


def _noncompact_step(s: float, angle: float) -> np.ndarray:
    w = math.sqrt(1.0 + s * s)
    e = cmath.exp(1j * angle)
    return np.array([[w, s * e], [s / e, w]], dtype=complex)


def _label_parts(
    label: SaddlePointLabel, k: SpectralConstants, n_sites: int
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """(diagonal column matrix, compact rotation) per site."""
    hats, rots = [], []
    coords = label_coordinates(label, k, n_sites)
    for j in range(n_sites):
        if label.kind == "plus":
            hats.append(k.diag_plus)
        elif label.kind == "minus":
            hats.append(k.diag_minus)
        else:
            hats.append(k.diag_pm if label.branches[j] == 0 else k.diag_mp)
        rots.append(_compact_step(coords.v[j], 0.0))
    return hats, rots


def label_matrices(
    label: SaddlePointLabel, k: SpectralConstants, n_sites: int
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Per-site 2x2 matrix pair (U_j, B_j) at the labeled configuration."""
    hats, rots = _label_parts(label, k, n_sites)
    us = [r.conj().T @ h @ r for h, r in zip(hats, rots)]
    bs = [k.diag_pm.copy() for _ in range(n_sites)]
    return us, bs


# ---------------------------------------------------------------------------
# functional evaluation (scalar decomposition; broadcasts over leading axes)


def _wrap_angle(x: np.ndarray) -> np.ndarray:
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - x, 2.0 * np.pi)


def _phase_value(phi, v, th, k: SpectralConstants, alpha, edges):
    lam = k.lambda0
    u = np.exp(1j * phi)
    q = u * u / 2.0 - 1j * lam * u - 1j * _wrap_angle(phi)
    val = np.sum(k.action_plus - q, axis=(-2, -1))
    w = np.sqrt(np.clip(1.0 - v * v, 0.0, None))
    gd = u[..., 0] - u[..., 1]
    for a, b in edges:
        du = u[..., a, :] - u[..., b, :]
        val = val + (alpha / 2.0) * np.sum(du * du, axis=-1)
        r12 = (
            w[..., a] ** 2 * v[..., b] ** 2
            + w[..., b] ** 2 * v[..., a] ** 2
            - 2.0
            * w[..., a]
            * w[..., b]
            * v[..., a]
            * v[..., b]
            * np.cos(th[..., b] - th[..., a])
        )
        val = val + alpha * r12 * gd[..., a] * gd[..., b]
    return val


def _radial_value(r, t, sig, k: SpectralConstants, alpha, edges):
    lam = k.lambda0
    ep = cmath.exp(1j * k.root_angle)
    b1 = r[..., 0] * ep
    b2 = r[..., 1] / ep
    with np.errstate(divide="ignore"):
        logr = np.log(r)
    col1 = b1 * b1 / 2.0 - 1j * lam * b1 - (logr[..., 0] + 1j * k.root_angle)
    col2 = b2 * b2 / 2.0 + 1j * lam * b2 - (
        logr[..., 1] + 1j * (math.pi - k.root_angle)
    )
    val = np.sum(col1 - k.action_plus + col2 - k.action_minus, axis=-1)
    s = np.sqrt(1.0 + t * t)
    big = b1 + b2
    for a, b in edges:
        db1 = b1[..., a] - b1[..., b]
        db2 = b2[..., a] - b2[..., b]
        val = val - (alpha / 2.0) * (db1 * db1 + db2 * db2)
        kap = (
            s[..., a] ** 2 * t[..., b] ** 2
            + s[..., b] ** 2 * t[..., a] ** 2
            - 2.0
            * s[..., a]
            * s[..., b]
            * t[..., a]
            * t[..., b]
            * np.cos(sig[..., b] - sig[..., a])
        )
        val = val + alpha * kap * big[..., a] * big[..., b]
    return val


def _ray_value(r, v, th, k: SpectralConstants, alpha, edges):
    lam = k.lambda0
    ep = cmath.exp(1j * k.root_angle)
    a_ = r * ep
    with np.errstate(divide="ignore"):
        logr = np.log(r)
    q = a_ * a_ / 2.0 - 1j * lam * a_ - (logr + 1j * k.root_angle)
    val = np.sum(q - k.action_plus, axis=(-2, -1))
    w = np.sqrt(np.clip(1.0 - v * v, 0.0, None))
    gd = a_[..., 0] - a_[..., 1]
    for a, b in edges:
        da = a_[..., a, :] - a_[..., b, :]
        val = val - (alpha / 2.0) * np.sum(da * da, axis=-1)
        r12 = (
            w[..., a] ** 2 * v[..., b] ** 2
            + w[..., b] ** 2 * v[..., a] ** 2
            - 2.0
            * w[..., a]
            * w[..., b]
            * v[..., a]
            * v[..., b]
            * np.cos(th[..., b] - th[..., a])
        )
        val = val - alpha * r12 * gd[..., a] * gd[..., b]
    return val


def _require_lattice(k: SpectralConstants) -> Lattice:
    if k.lattice is None:
        raise ValueError("constants were built without a lattice")
    return k.lattice


def eval_phase_functional(
    coords: SaddleCoordinates, k: SpectralConstants, alpha: float
) -> complex:
    """Phase functional; real part >= 0, exactly 0 on the minimizing family."""
    lat = _require_lattice(k)
    return complex(
        _phase_value(coords.u_angles, coords.v, coords.theta, k, alpha, lat.edges)
    )


def eval_radial_functional(
    coords: SaddleCoordinates, k: SpectralConstants, alpha: float
) -> complex:
    """Radial functional; vanishes exactly at unit radii and trivial coset."""
    lat = _require_lattice(k)
    return complex(
        _radial_value(coords.b_radii, coords.t, coords.sigma, k, alpha, lat.edges)
    )


def eval_ray_functional(
    coords: SaddleCoordinates, k: SpectralConstants, alpha: float
) -> complex:
    """Single-ray functional; vanishes exactly at unit radii."""
    lat = _require_lattice(k)
    if coords.a_radii is None:
        raise ValueError("ray functional needs the a_radii coordinate group")
    return complex(
        _ray_value(coords.a_radii, coords.a_v, coords.a_theta, k, alpha, lat.edges)
    )


def scan_functional(
    which: str,
    k: SpectralConstants,
    alpha: float,
    n_points: int,
    seed: int,
    r_low: float = 0.01,
    r_high: float = 5.0,
    t_high: float = 3.0,
) -> np.ndarray:
    """Evaluate one functional at ``n_points`` random coordinate draws.

    Returns the complex values; the positivity diagnostics look at the
    real part. Draws follow the same gauge convention as
    ``SaddleCoordinates`` (site 0 coset coordinates zeroed).
    """
    if which not in _FUNCTIONALS:
        raise ValueError(f"which must be one of {_FUNCTIONALS}, got {which!r}")
    lat = _require_lattice(k)
    n = lat.n_sites
    rng = np.random.default_rng(seed)
    out = np.empty(n_points, dtype=complex)
    done = 0
    while done < n_points:
        m = min(65536, n_points - done)
        if which == "phase":
            phi = rng.uniform(-math.pi, math.pi, (m, n, 2))
            v = rng.uniform(0.0, 1.0, (m, n))
            th = rng.uniform(0.0, 2.0 * math.pi, (m, n))
            v[:, 0] = 0.0
            th[:, 0] = 0.0
            out[done : done + m] = _phase_value(phi, v, th, k, alpha, lat.edges)
        elif which == "radial":
            r = rng.uniform(r_low, r_high, (m, n, 2))
            t = rng.uniform(0.0, t_high, (m, n))
            sig = rng.uniform(0.0, 2.0 * math.pi, (m, n))
            t[:, 0] = 0.0
            sig[:, 0] = 0.0
            out[done : done + m] = _radial_value(r, t, sig, k, alpha, lat.edges)
        else:
            r = rng.uniform(r_low, r_high, (m, n, 2))
            v = rng.uniform(0.0, 1.0, (m, n))
            th = rng.uniform(0.0, 2.0 * math.pi, (m, n))
            v[:, 0] = 0.0
            th[:, 0] = 0.0
            out[done : done + m] = _ray_value(r, v, th, k, alpha, lat.edges)
        done += m
    return out


# ---------------------------------------------------------------------------
# minimization


def _phase_objective(x, k: SpectralConstants, alpha, edges, n):
    lam = k.lambda0
    phi = x[: 2 * n].reshape(n, 2)
    chi = np.zeros(n)
    chi[1:] = x[2 * n : 3 * n - 1]
    th = np.zeros(n)
    th[1:] = x[3 * n - 1 :]
    u = np.exp(1j * phi)
    sp = np.sin(phi) - lam / 2.0
    val = float(np.sum(sp * sp))
    gphi = 2.0 * sp * np.cos(phi)
    gchi = np.zeros(n)
    gth = np.zeros(n)
    gd = u[:, 0] - u[:, 1]
    a2 = 2.0 * chi
    sa, ca = np.sin(a2), np.cos(a2)
    for a, b in edges:
        du = u[a] - u[b]
        val += (alpha / 2.0) * float(np.sum(du * du).real)
        gphi[a] += alpha * (du * 1j * u[a]).real
        gphi[b] += alpha * (-du * 1j * u[b]).real
        dth = th[b] - th[a]
        cd, sd = math.cos(dth), math.sin(dth)
        r12 = (1.0 - ca[a] * ca[b] - sa[a] * sa[b] * cd) / 2.0
        gg = (gd[a] * gd[b]).real
        val += alpha * r12 * gg
        gphi[a, 0] += alpha * r12 * (1j * u[a, 0] * gd[b]).real
        gphi[a, 1] += alpha * r12 * (-1j * u[a, 1] * gd[b]).real
        gphi[b, 0] += alpha * r12 * (1j * u[b, 0] * gd[a]).real
        gphi[b, 1] += alpha * r12 * (-1j * u[b, 1] * gd[a]).real
        gchi[a] += alpha * (sa[a] * ca[b] - ca[a] * sa[b] * cd) * gg
        gchi[b] += alpha * (sa[b] * ca[a] - ca[b] * sa[a] * cd) * gg
        gth[a] += alpha * (-sa[a] * sa[b] * sd / 2.0) * gg
        gth[b] += alpha * (sa[a] * sa[b] * sd / 2.0) * gg
    grad = np.concatenate([gphi.ravel(), gchi[1:], gth[1:]])
    return val, grad


def _radial_objective(x, k: SpectralConstants, alpha, edges, n):
    lam = k.lambda0
    lam2 = lam * lam
    r = x[: 2 * n].reshape(n, 2)
    t = np.zeros(n)
    t[1:] = x[2 * n : 3 * n - 1]
    sig = np.zeros(n)
    sig[1:] = x[3 * n - 1 :]
    ep = cmath.exp(1j * k.root_angle)
    val = float(
        np.sum((2.0 - lam2) * (r * r - 1.0) / 4.0 + lam2 * (r - 1.0) / 2.0 - np.log(r))
    )
    gr = (2.0 - lam2) * r / 2.0 + lam2 / 2.0 - 1.0 / r
    gt = np.zeros(n)
    gsig = np.zeros(n)
    big = r[:, 0] * ep + r[:, 1] / ep
    s = np.sqrt(1.0 + t * t)
    for a, b in edges:
        dr = r[a] - r[b]
        val += -(alpha * (2.0 - lam2) / 4.0) * float(np.sum(dr * dr))
        gr[a] += -(alpha * (2.0 - lam2) / 2.0) * dr
        gr[b] += (alpha * (2.0 - lam2) / 2.0) * dr
        dsg = sig[b] - sig[a]
        cd, sd = math.cos(dsg), math.sin(dsg)
        kap = (
            s[a] ** 2 * t[b] ** 2
            + s[b] ** 2 * t[a] ** 2
            - 2.0 * s[a] * s[b] * t[a] * t[b] * cd
        )
        ss = (big[a] * big[b]).real
        val += alpha * kap * ss
        gr[a, 0] += alpha * kap * (ep * big[b]).real
        gr[a, 1] += alpha * kap * (big[b] / ep).real
        gr[b, 0] += alpha * kap * (ep * big[a]).real
        gr[b, 1] += alpha * kap * (big[a] / ep).real
        gt[a] += alpha * ss * (
            2.0 * t[a] * t[b] ** 2
            + 2.0 * t[a] * s[b] ** 2
            - 2.0 * s[b] * t[b] * cd * (s[a] + t[a] ** 2 / s[a])
        )
        gt[b] += alpha * ss * (
            2.0 * t[b] * t[a] ** 2
            + 2.0 * t[b] * s[a] ** 2
            - 2.0 * s[a] * t[a] * cd * (s[b] + t[b] ** 2 / s[b])
        )
        gsig[a] += alpha * ss * (-2.0 * s[a] * s[b] * t[a] * t[b] * sd)
        gsig[b] += alpha * ss * (2.0 * s[a] * s[b] * t[a] * t[b] * sd)
    grad = np.concatenate([gr.ravel(), gt[1:], gsig[1:]])
    return val, grad


def _ray_objective(x, k: SpectralConstants, alpha, edges, n):
    lam = k.lambda0
    lam2 = lam * lam
    r = x[: 2 * n].reshape(n, 2)
    chi = np.zeros(n)
    chi[1:] = x[2 * n : 3 * n - 1]
    th = np.zeros(n)
    th[1:] = x[3 * n - 1 :]
    val = float(
        np.sum(
            (2.0 - lam2) * r * r / 4.0
            + lam2 * r / 2.0
            - np.log(r)
            - (2.0 + lam2) / 4.0
        )
    )
    gr = (2.0 - lam2) * r / 2.0 + lam2 / 2.0 - 1.0 / r
    gchi = np.zeros(n)
    gth = np.zeros(n)
    dcol = r[:, 0] - r[:, 1]
    a2 = 2.0 * chi
    sa, ca = np.sin(a2), np.cos(a2)
    cross = alpha * (2.0 - lam2) / 2.0
    for a, b in edges:
        dr = r[a] - r[b]
        val += -(alpha * (2.0 - lam2) / 4.0) * float(np.sum(dr * dr))
        gr[a] += -(alpha * (2.0 - lam2) / 2.0) * dr
        gr[b] += (alpha * (2.0 - lam2) / 2.0) * dr
        dth = th[b] - th[a]
        cd, sd = math.cos(dth), math.sin(dth)
        r12 = (1.0 - ca[a] * ca[b] - sa[a] * sa[b] * cd) / 2.0
        dd = dcol[a] * dcol[b]
        val += -cross * r12 * dd
        gr[a, 0] += -cross * r12 * dcol[b]
        gr[a, 1] += cross * r12 * dcol[b]
        gr[b, 0] += -cross * r12 * dcol[a]
        gr[b, 1] += cross * r12 * dcol[a]
        gchi[a] += -cross * dd * (sa[a] * ca[b] - ca[a] * sa[b] * cd)
        gchi[b] += -cross * dd * (sa[b] * ca[a] - ca[b] * sa[a] * cd)
        gth[a] += -cross * dd * (-sa[a] * sa[b] * sd / 2.0)
        gth[b] += -cross * dd * (sa[a] * sa[b] * sd / 2.0)
    grad = np.concatenate([gr.ravel(), gchi[1:], gth[1:]])
    return val, grad


_OBJECTIVES = {
    "phase": _phase_objective,
    "radial": _radial_objective,
    "ray": _ray_objective,
}


def _chart_setup(which, n, rng):
    if which == "phase":
        x0 = np.concatenate(
            [
                rng.uniform(-math.pi, math.pi, 2 * n),
                rng.uniform(0.0, math.pi / 2.0, n - 1),
                rng.uniform(-math.pi, math.pi, n - 1),
            ]
        )
        bounds = (
            [(None, None)] * (2 * n)
            + [(0.0, math.pi / 2.0)] * (n - 1)
            + [(None, None)] * (n - 1)
        )
    elif which == "radial":
        x0 = np.concatenate(
            [
                rng.uniform(0.2, 3.0, 2 * n),
                rng.uniform(0.0, 2.0, n - 1),
                rng.uniform(0.0, 2.0 * math.pi, n - 1),
            ]
        )
        bounds = (
            [(1e-3, 10.0)] * (2 * n)
            + [(0.0, 5.0)] * (n - 1)
            + [(None, None)] * (n - 1)
        )
    else:
        x0 = np.concatenate(
            [
                rng.uniform(0.2, 3.0, 2 * n),
                rng.uniform(0.0, math.pi / 2.0, n - 1),
                rng.uniform(-math.pi, math.pi, n - 1),
            ]
        )
        bounds = (
            [(1e-3, 10.0)] * (2 * n)
            + [(0.0, math.pi / 2.0)] * (n - 1)
            + [(None, None)] * (n - 1)
        )
    return x0, bounds


def _coords_from_chart(which, x, n) -> SaddleCoordinates:
    base = dict(
        u_angles=np.zeros((n, 2)),
        b_radii=np.ones((n, 2)),
        v=np.zeros(n),
        theta=np.zeros(n),
        t=np.zeros(n),
        sigma=np.zeros(n),
    )
    head = x[: 2 * n].reshape(n, 2)
    mid = np.zeros(n)
    mid[1:] = x[2 * n : 3 * n - 1]
    tail = np.zeros(n)
    tail[1:] = x[3 * n - 1 :]
    if which == "phase":
        base["u_angles"] = _wrap_angle(head)
        base["v"] = np.sin(mid)
        base["theta"] = tail
    elif which == "radial":
        base["b_radii"] = head
        base["t"] = mid
        base["sigma"] = tail
    else:
        base["a_radii"] = head
        base["a_v"] = np.sin(mid)
        base["a_theta"] = tail
    return SaddleCoordinates(**base)


def _distance_to_labels(
    which: str, coords: SaddleCoordinates, k: SpectralConstants
) -> tuple[float, SaddlePointLabel | None]:
    n = coords.n_sites
    if which == "radial":
        d2 = float(np.sum((coords.b_radii - 1.0) ** 2) + np.sum(coords.t**2))
        return math.sqrt(d2), None
    if which == "ray":
        d2 = float(np.sum((coords.a_radii - 1.0) ** 2))
        return math.sqrt(d2), SaddlePointLabel(kind="plus")
    best, best_label = math.inf, None
    for label in enumerate_saddle_labels(n):
        targets = _label_angle_targets(label, k, n)
        d2 = float(np.sum(_wrap_angle(coords.u_angles - targets) ** 2))
        if label.kind == "mixed":
            vt = np.array(
                [0.0 if b == label.branches[0] else 1.0 for b in label.branches]
            )
            d2 += float(np.sum((coords.v - vt) ** 2))
        if d2 < best:
            best, best_label = d2, label
    return math.sqrt(best), best_label


@dataclass(frozen=True)
class FunctionalMinimum:
    """Outcome of a multi-start search: best value, where, and how close
    the minimizer sits to the predicted family."""

    value: float
    coordinates: SaddleCoordinates
    distance: float
    nearest: SaddlePointLabel | None
    converged: int
    restarts: int


def minimize_functional(
    which: str,
    k: SpectralConstants,
    alpha: float,
    restarts: int = 12,
    seed: int = 0,
) -> FunctionalMinimum:
    """Multi-start local minimization of the real part of one functional.

    Runs ``restarts`` L-BFGS-B searches from random starts (restarts >= 10
    enforced). Non-convergence of individual restarts is tolerated and
    reported through ``converged``.
    """
    if which not in _FUNCTIONALS:
        raise ValueError(f"which must be one of {_FUNCTIONALS}, got {which!r}")
    if restarts < 10:
        raise ValueError(f"restarts must be >= 10, got {restarts}")
    lat = _require_lattice(k)
    n = lat.n_sites
    rng = np.random.default_rng(seed)
    fun = _OBJECTIVES[which]
    best_val, best_x, n_ok = math.inf, None, 0
    for _ in range(restarts):
        x0, bounds = _chart_setup(which, n, rng)
        res = optimize.minimize(
            fun,
            x0,
            args=(k, alpha, lat.edges, n),
            method="L-BFGS-B",
            jac=True,
            bounds=bounds,
            options={"maxiter": 1000, "ftol": 1e-15, "gtol": 1e-11},
        )
        if res.success:
            n_ok += 1
        if res.fun < best_val:
            best_val, best_x = float(res.fun), res.x
    coords = _coords_from_chart(which, best_x, n)
    dist, label = _distance_to_labels(which, coords, k)
    return FunctionalMinimum(
        value=best_val,
        coordinates=coords,
        distance=dist,
        nearest=label,
        converged=n_ok,
        restarts=restarts,
    )


# ---------------------------------------------------------------------------
# superdeterminant and saddle verification


def superdeterminant(
    u_list: list[np.ndarray],
    b_list: list[np.ndarray],
    alpha: float,
    lattice: Lattice,
) -> complex:
    """det of the 4n x 4n coupling block alpha*Delta (x) I_4 + I +
    blockdiag(kron(U_j^{-1}, B_j^{-1})).

    Vanishes, together with its first derivatives, at every labeled
    minimizing configuration.
    """
    n = lattice.n_sites
    if len(u_list) != n or len(b_list) != n:
        raise ValueError(f"need {n} per-site matrix pairs")
    delta = laplacian(lattice)
    big = np.kron(alpha * delta, np.eye(4, dtype=complex)).astype(complex)
    big += np.eye(4 * n, dtype=complex)
    for j, (u, b) in enumerate(zip(u_list, b_list)):
        u = np.asarray(u, dtype=complex)
        b = np.asarray(b, dtype=complex)
        if u.shape != (2, 2) or b.shape != (2, 2):
            raise ValueError("per-site matrices must be 2x2")
        if abs(np.linalg.det(u)) < 1e-12 or abs(np.linalg.det(b)) < 1e-12:
            raise ValueError("singular per-site matrix")
        big[4 * j : 4 * j + 4, 4 * j : 4 * j + 4] += np.kron(
            np.linalg.inv(u), np.linalg.inv(b)
        )
    return complex(np.linalg.det(big))


def superdeterminant_factors(
    u_diag: np.ndarray,
    b_diag: np.ndarray,
    alpha: float,
    lattice: Lattice,
) -> tuple[complex, complex, complex, complex]:
    """For diagonal per-site matrices the block determinant splits into
    four n x n determinants, one per column pairing; their product equals
    ``superdeterminant`` of the corresponding diagonal inputs."""
    u_diag = np.asarray(u_diag, dtype=complex)
    b_diag = np.asarray(b_diag, dtype=complex)
    n = lattice.n_sites
    if u_diag.shape != (n, 2) or b_diag.shape != (n, 2):
        raise ValueError("diagonals must have shape (n_sites, 2)")
    delta = alpha * laplacian(lattice)
    out = []
    for l in range(2):
        for m in range(2):
            mat = delta + np.diag(1.0 + 1.0 / (u_diag[:, l] * b_diag[:, m]))
            out.append(complex(np.linalg.det(mat)))
    return tuple(out)


def saddle_derivative_check(
    label: SaddlePointLabel,
    k: SpectralConstants,
    alpha: float,
    h: float = 1e-4,
) -> float:
    """Max |central difference| of the superdeterminant over every
    one-parameter deformation at a labeled configuration.

    Directions per site: the two column phases, the two column radii,
    and the compact/noncompact coset motions (each probed along two
    transversal angles). The true first derivatives vanish, so the
    returned residual is O(h^2).
    """
    if not 1e-6 <= h <= 1e-3:
        raise ValueError(f"step h must lie in [1e-6, 1e-3], got {h}")
    lat = _require_lattice(k)
    n = lat.n_sites
    hats, rots = _label_parts(label, k, n)
    base_u = [r.conj().T @ hh @ r for hh, r in zip(hats, rots)]
    base_b = [k.diag_pm.copy() for _ in range(n)]

    def d_with(j, u=None, b=None):
        us = list(base_u)
        bs = list(base_b)
        if u is not None:
            us[j] = u
        if b is not None:
            bs[j] = b
        return superdeterminant(us, bs, alpha, lat)

    worst = 0.0
    for j in range(n):
        for col in range(2):
            # column phase tilt
            tw = np.ones(2, dtype=complex)
            tw[col] = cmath.exp(1j * h)
            up = rots[j].conj().T @ (hats[j] * tw) @ rots[j]
            tw[col] = cmath.exp(-1j * h)
            um = rots[j].conj().T @ (hats[j] * tw) @ rots[j]
            worst = max(worst, abs(d_with(j, u=up) - d_with(j, u=um)) / (2 * h))
            # column radius tilt
            tw = np.ones(2, dtype=complex)
            tw[col] = 1.0 + h
            bp = k.diag_pm * tw
            tw[col] = 1.0 - h
            bm = k.diag_pm * tw
            worst = max(worst, abs(d_with(j, b=bp) - d_with(j, b=bm)) / (2 * h))
        for ang in (0.0, 1.1):
            # compact coset motion
            vp = _compact_step(h, ang) @ rots[j]
            vm = _compact_step(-h, ang) @ rots[j]
            up = vp.conj().T @ hats[j] @ vp
            um = vm.conj().T @ hats[j] @ vm
            worst = max(worst, abs(d_with(j, u=up) - d_with(j, u=um)) / (2 * h))
            # noncompact coset motion
            tp = _noncompact_step(h, ang)
            tm = _noncompact_step(-h, ang)
            bp = np.linalg.inv(tp) @ k.diag_pm @ tp
            bm = np.linalg.inv(tm) @ k.diag_pm @ tm
            worst = max(worst, abs(d_with(j, b=bp) - d_with(j, b=bm)) / (2 * h))
    return worst


# ---------------------------------------------------------------------------
# closed-form coset averages and their expansion coefficients


def compact_coset_average(us: np.ndarray, k: SpectralConstants) -> complex:
    """Closed form of the compact coset average of the exponential drive,
    evaluated at per-site unit-circle column values ``us`` (n, 2).

    Only the column means enter. Degenerate means reduce to the analytic
    limit rather than an error.
    """
    us = np.asarray(us, dtype=complex)
    if us.ndim != 2 or us.shape[1] != 2:
        raise ValueError("us must have shape (n_sites, 2)")
    m = us.mean(axis=0)
    return hciz_u2(m, k.drive, -1.0)


def noncompact_coset_average(bs: np.ndarray, k: SpectralConstants) -> complex:
    """Closed form of the noncompact coset average at per-site diagonal
    values ``bs`` (n, 2); the second column is the signed matrix entry.

    Raises ValueError when the convergence condition of the noncompact
    integral fails for the given column means.
    """
    bs = np.asarray(bs, dtype=complex)
    if bs.ndim != 2 or bs.shape[1] != 2:
        raise ValueError("bs must have shape (n_sites, 2)")
    m = bs.mean(axis=0)
    return hciz_u11(m, k.drive, -1.0)


def compact_offset_response(us: np.ndarray, k: SpectralConstants) -> complex:
    """Derivative of log ``compact_coset_average`` in the first spectral
    offset, in closed form."""
    us = np.asarray(us, dtype=complex)
    if us.ndim != 2 or us.shape[1] != 2:
        raise ValueError("us must have shape (n_sites, 2)")
    theta = k.half_separation
    if theta == 0:
        raise ValueError("offset response undefined at zero probe separation")
    m1, m2 = us.mean(axis=0)
    q = k.drive
    e1 = cmath.exp(-(m1 * q[0] + m2 * q[1]))
    e2 = cmath.exp(-(m1 * q[1] + m2 * q[0]))
    if abs(e1 - e2) <= 1e-13 * max(abs(e1), abs(e2)):
        ratio = (m1 + m2) / 2.0 + 1.0 / (2j * theta)
    else:
        ratio = (m1 * e1 - m2 * e2) / (e1 - e2)
    return -1j * ratio / k.density + 1.0 / (2.0 * k.density * theta)


def noncompact_offset_response(bs: np.ndarray, k: SpectralConstants) -> complex:
    """Derivative of log ``noncompact_coset_average`` in the second
    spectral offset, in closed form."""
    bs = np.asarray(bs, dtype=complex)
    if bs.ndim != 2 or bs.shape[1] != 2:
        raise ValueError("bs must have shape (n_sites, 2)")
    theta = k.half_separation
    if theta == 0:
        raise ValueError("offset response undefined at zero probe separation")
    m2 = bs[:, 1].mean()
    return 1j * m2 / k.density - 1.0 / (2.0 * k.density * theta)


@dataclass(frozen=True)
class ExpansionCoefficients:
    """First-order expansion data at the split-branch configuration:
    phase tilts of the compact response (two columns), radius tilt of the
    noncompact response, and the mixed second derivative of the
    superdeterminant along (second phase, second radius)."""

    compact_first: complex
    compact_second: complex
    noncompact_second: complex
    superdet_mixed: complex


def saddle_expansion_coefficients(
    k: SpectralConstants, alpha: float, lattice: Lattice
) -> ExpansionCoefficients:
    theta = k.half_separation
    if theta == 0:
        raise ValueError("expansion coefficients need a nonzero probe separation")
    n = lattice.n_sites
    x = k.root_gap * theta
    p = cmath.exp(1j * x)
    mm = cmath.exp(-1j * x)
    denom = p - mm
    if abs(denom) < 1e-14:
        raise ValueError("degenerate probe separation: exp factors coincide")
    c1 = (1j * k.root_plus / (n * k.density)) * (
        -1j * p / denom - 2.0 * k.root_gap * theta / denom**2
    )
    c2 = (1j * k.root_minus / (n * k.density)) * (
        1j * mm / denom + 2.0 * k.root_gap * theta / denom**2
    )
    d2 = 1j * k.root_minus / (n * k.density)
    delta = alpha * laplacian(lattice)
    reduced = delta + (1.0 + k.root_plus ** (-2)) * np.eye(n)
    minor = complex(np.linalg.det(delta[1:, 1:])) if n > 1 else 1.0
    a3 = 1j * abs(np.linalg.det(reduced)) ** 2 * minor**2
    return ExpansionCoefficients(
        compact_first=c1,
        compact_second=c2,
        noncompact_second=d2,
        superdet_mixed=a3,
    )


# ---------------------------------------------------------------------------
# two-point closure identity


def _csinc(x: complex) -> complex:
    if abs(x) < 1e-5:
        x2 = x * x
        return 1.0 - x2 / 6.0 + x2 * x2 / 120.0
    return cmath.sin(x) / x


def closure_constant(lambda0: float) -> float:
    """(root_plus^2 + root_minus^2 + 2) / (2*pi*density)^2; identically 1."""
    k = spectral_constants(lambda0)
    num = k.root_plus**2 + k.root_minus**2 + 2.0
    return float(num.real) / (2.0 * math.pi * k.density) ** 2


def closure_identity(xi1: float, xi2: float, lambda0: float, eps: float) -> float:
    """Closed-form two-point limit the estimators are checked against.

    Evaluates constant - (sin(g*theta)/(g*theta))^2 at the complex
    half-separation theta for broadenings {eps, 10 eps, 100 eps} and
    extrapolates the even bias in eps to zero by three-node Richardson
    weights; eps = 0 evaluates directly. The limit equals
    1 - sinc(pi*(xi1 - xi2))^2.
    """
    if not abs(lambda0) < math.sqrt(2.0):
        raise ValueError(
            f"identity holds in the bulk regime |lambda0| < sqrt(2), got {lambda0}"
        )
    if eps < 0.0:
        raise ValueError(f"broadening eps must be >= 0, got {eps}")
    gap = math.sqrt(4.0 - lambda0 * lambda0)
    density = gap / (2.0 * math.pi)
    const = closure_constant(lambda0)

    def value_at(e: float) -> complex:
        theta = complex((xi2 - xi1) / (2.0 * density), -e)
        return const - _csinc(gap * theta) ** 2

    if eps == 0.0:
        return float(value_at(0.0).real)
    nodes = (eps, 10.0 * eps, 100.0 * eps)
    total = 0.0 + 0.0j
    for i, ei in enumerate(nodes):
        wgt = 1.0
        for jj, ej in enumerate(nodes):
            if jj != i:
                wgt *= ej / (ej - ei)
        total += wgt * value_at(ei)
    return float(total.real)
