"""Dense Hermitian eigenvalues, values only, with no external solver.

Pipeline: complex Householder reduction to tridiagonal form, a diagonal
phase normalization (eigenvalues of a Hermitian tridiagonal depend only
on the moduli of the off-diagonal entries), then implicit-shift QL
iteration on the real (d, e) arrays. The two kernels are JIT-compiled
when numba is importable and run as plain Python otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Spectrum",
    "eigenvalues",
    "eigvals_hermitian",
    "resolvent_trace",
    "append_spectra",
    "load_spectra",
    "HAVE_NUMBA",
]

_EPS = float(np.finfo(np.float64).eps)
_QL_SWEEP_CAP = 50


def _tridiag_impl(a):
    # In-place Householder similarity; assumes a complex Hermitian.
    n = a.shape[0]
    for k in range(n - 2):
        xnorm2 = 0.0
        for i in range(k + 1, n):
            xnorm2 += a[i, k].real ** 2 + a[i, k].imag ** 2
        xnorm = math.sqrt(xnorm2)
        if xnorm == 0.0:
            continue
        x0 = a[k + 1, k]
        ax0 = abs(x0)
        if ax0 > 0.0:
            beta = -(x0 / ax0) * xnorm
        else:
            beta = complex(-xnorm, 0.0)
        # v = (x - beta*e1)/norm; the sign of beta keeps v away from 0
        nn = n - k - 1
        v = np.empty(nn, dtype=np.complex128)
        for i in range(nn):
            v[i] = a[k + 1 + i, k]
        v[0] -= beta
        vnorm2 = 0.0
        for i in range(nn):
            vnorm2 += v[i].real ** 2 + v[i].imag ** 2
        vnorm = math.sqrt(vnorm2)
        for i in range(nn):
            v[i] /= vnorm
        # u = A v, K = Re(v* u), w = 2(u - K v); A <- A - v w* - w v*
        u = np.zeros(nn, dtype=np.complex128)
        for i in range(nn):
            acc = 0.0 + 0.0j
            for j in range(nn):
                acc += a[k + 1 + i, k + 1 + j] * v[j]
            u[i] = acc
        kre = 0.0
        for i in range(nn):
            kre += (np.conj(v[i]) * u[i]).real
        w = np.empty(nn, dtype=np.complex128)
        for i in range(nn):
            w[i] = 2.0 * (u[i] - kre * v[i])
        for i in range(nn):
            vi = v[i]
            wi = w[i]
            for j in range(nn):
                a[k + 1 + i, k + 1 + j] -= vi * np.conj(w[j]) + wi * np.conj(v[j])
        a[k + 1, k] = beta
        a[k, k + 1] = np.conj(beta)
        for i in range(k + 2, n):
            a[i, k] = 0.0
            a[k, i] = 0.0


def _tql1_impl(d, e):
    """Implicit-shift QL on (d, e); e[n-1] is scratch. Returns 0 on
    success, or l+1 if eigenvalue l exceeded the sweep cap."""
    n = d.shape[0]
    if n == 1:
        return 0
    for l in range(n):
        it = 0
        while True:
            mm = l
            while mm < n - 1:
                dd = abs(d[mm]) + abs(d[mm + 1])
                if abs(e[mm]) <= _EPS * dd:
                    break
                mm += 1
            if mm == l:
                break
            if it == _QL_SWEEP_CAP:
                return l + 1
            it += 1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[mm] - d[l] + e[l] / (g + (r if g >= 0.0 else -r))
            s = 1.0
            c = 1.0
            p = 0.0
            underflow = False
            for i in range(mm - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[mm] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[mm] = 0.0
    return 0


try:
    from numba import njit

    _tridiag = njit(cache=True)(_tridiag_impl)
    _tql1 = njit(cache=True)(_tql1_impl)
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _tridiag = _tridiag_impl
    _tql1 = _tql1_impl
    HAVE_NUMBA = False


@dataclass(frozen=True)
class Spectrum:
    values: np.ndarray
    N: int
    provenance: tuple[int, int] | None = None


def eigvals_hermitian(a) -> np.ndarray:
    """Ascending eigenvalues of a Hermitian matrix given as an array."""
    a = np.array(a, dtype=np.complex128, order="C")
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    scale = float(np.max(np.abs(a))) if n else 0.0
    if float(np.max(np.abs(a - a.conj().T))) > 1e-12 * max(1.0, scale):
        raise ValueError("matrix is not Hermitian")
    if n == 1:
        return np.array([a[0, 0].real])
    _tridiag(a)
    d = np.ascontiguousarray(np.diag(a).real)
    e = np.zeros(n)
    e[: n - 1] = np.abs(np.diag(a, -1))
    info = _tql1(d, e)
    if info != 0:
        raise ArithmeticError(
            f"QL iteration hit the {_QL_SWEEP_CAP}-sweep cap at eigenvalue {info - 1}"
        )
    d.sort()
    return d


def eigenvalues(H) -> Spectrum:
    """Spectrum of a SampledMatrix (or plain Hermitian ndarray)."""
    provenance = getattr(H, "provenance", None)
    entries = getattr(H, "entries", H)
    vals = eigvals_hermitian(entries)
    return Spectrum(values=vals, N=vals.shape[0], provenance=provenance)


def resolvent_trace(spectrum: Spectrum, z: complex) -> complex:
    """Tr (H - z)^{-1} = sum_i 1/(lambda_i - z) for non-real z."""
    z = complex(z)
    if z.imag == 0.0:
        raise ValueError("resolvent trace requires Im z != 0")
    return complex(np.sum(1.0 / (spectrum.values - z)))


def append_spectra(path, spectra) -> None:
    """Append rows seed,index,N,lambda_1..lambda_N (17 significant digits)."""
    with open(path, "a", encoding="ascii") as fh:
        for s in spectra:
            seed, index = s.provenance if s.provenance is not None else (-1, -1)
            vals = ",".join("%.17g" % v for v in s.values)
            fh.write(f"{seed},{index},{s.N},{vals}\n")


def load_spectra(path) -> list[Spectrum]:
    out = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            seed, index, n = int(parts[0]), int(parts[1]), int(parts[2])
            vals = np.array([float(p) for p in parts[3 : 3 + n]])
            if vals.shape[0] != n:
                raise ValueError(f"{path}: row claims {n} values, found {vals.shape[0]}")
            prov = None if (seed, index) == (-1, -1) else (seed, index)
            out.append(Spectrum(values=vals, N=n, provenance=prov))
    return out
