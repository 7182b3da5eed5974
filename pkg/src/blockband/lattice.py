"""Periodic lattice, block variance profile, and Gaussian sampling.

The ensemble lives on the periodic box [1, m]^d with |L| = m^d sites. A
Hermitian matrix of order N = W * |L| is viewed as a grid of W x W
blocks indexed by site pairs (j, k); every entry of block (j, k) has
second moment J_jk, where

    J = (I + alpha * Delta) / W,    0 <= alpha < 1/(4d),

and Delta is the discrete Laplacian of the periodic box under the
negative semidefinite convention Delta = A - 2d*I (adjacency minus
degree). Columns of J sum to 1/W exactly. With a single site the model
reduces to GUE with entry variance 1/W.

Sampling is a pure function of (profile, stream). Streams are
counter-based (Philox) keyed by (seed, sample index), so a Monte Carlo
run is reproducible bit for bit no matter how samples are distributed
over workers.
"""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Lattice",
    "VarianceProfile",
    "SampledMatrix",
    "build_lattice",
    "laplacian",
    "variance_profile",
    "sample",
    "sample_rng",
    "save_matrix",
    "load_matrix",
]

_MAGIC = b"BBRM"
_CACHE_VERSION = 1


@dataclass(frozen=True)
class Lattice:
    """Periodic box [1, m]^d with lexicographically ordered sites.

    ``edges`` lists unordered neighbor pairs as (low, high) site-index
    tuples, with multiplicity: for m = 2 the two wrap directions of an
    axis coincide and the pair appears twice, so that every site keeps
    exactly 2d incident edge endpoints. m = 1 has no edges.
    """

    d: int
    m: int
    sites: tuple[tuple[int, ...], ...]
    edges: tuple[tuple[int, int], ...]

    @property
    def n_sites(self) -> int:
        return len(self.sites)


@dataclass(frozen=True)
class VarianceProfile:
    lattice: Lattice
    alpha: float
    W: int
    J: np.ndarray


@dataclass(frozen=True)
class SampledMatrix:
    """One draw of the ensemble; entries indexed by (site, orbital) pairs."""

    N: int
    entries: np.ndarray
    provenance: tuple[int, int] | None = None


def build_lattice(d: int, m: int) -> Lattice:
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if m < 1:
        raise ValueError(f"side length must be >= 1, got {m}")
    sites = tuple(itertools.product(range(1, m + 1), repeat=d))
    index = {s: i for i, s in enumerate(sites)}
    edges = []
    for i, site in enumerate(sites):
        for axis in range(d):
            nb = list(site)
            nb[axis] = site[axis] % m + 1
            j = index[tuple(nb)]
            if j == i:
                continue
            edges.append((min(i, j), max(i, j)))
    return Lattice(d=d, m=m, sites=sites, edges=tuple(sorted(edges)))


def laplacian(lattice: Lattice) -> np.ndarray:
    """Discrete Laplacian A - deg*I, negative semidefinite, zero row sums."""
    n = lattice.n_sites
    delta = np.zeros((n, n))
    for i, j in lattice.edges:
        delta[i, j] += 1.0
        delta[j, i] += 1.0
    delta -= np.diag(delta.sum(axis=1))
    return delta


def variance_profile(lattice: Lattice, alpha: float, W: int) -> VarianceProfile:
    if not 0.0 <= alpha < 1.0 / (4 * lattice.d):
        raise ValueError(
            f"alpha must lie in [0, 1/(4d)) = [0, {1.0 / (4 * lattice.d)}), got {alpha}"
        )
    if W < 1:
        raise ValueError(f"block size W must be >= 1, got {W}")
    n = lattice.n_sites
    J = (np.eye(n) + alpha * laplacian(lattice)) / W
    return VarianceProfile(lattice=lattice, alpha=alpha, W=W, J=J)


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for sample ``index`` of a run keyed by ``seed``."""
    key = np.array([seed, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample(
    profile: VarianceProfile,
    rng: np.random.Generator,
    provenance: tuple[int, int] | None = None,
) -> SampledMatrix:
    """Draw one Hermitian matrix with block variances J.

    Entries above the diagonal are complex Gaussian with independent
    real and imaginary parts of variance J_jk / 2 each (so E|H|^2 =
    J_jk); diagonal entries are real with variance J_jj; the lower
    triangle mirrors by conjugation, so Hermitian symmetry is exact.
    """
    W = profile.W
    n = profile.lattice.n_sites
    N = W * n
    sig2 = np.kron(profile.J, np.ones((W, W)))
    x = rng.standard_normal((N, N))
    y = rng.standard_normal((N, N))
    g = rng.standard_normal(N)
    upper = np.triu((x + 1j * y) * np.sqrt(sig2 / 2.0), k=1)
    h = upper + upper.conj().T
    h[np.diag_indices(N)] = g * np.sqrt(np.diag(sig2))
    return SampledMatrix(N=N, entries=h, provenance=provenance)


def save_matrix(path, matrix: SampledMatrix) -> None:
    """Binary cache: 16-byte header (magic, version, N), then little-endian
    float64 (re, im) pairs in row-major order."""
    header = _MAGIC + struct.pack("<IQ", _CACHE_VERSION, matrix.N)
    body = np.empty((matrix.N, matrix.N, 2), dtype="<f8")
    body[..., 0] = matrix.entries.real
    body[..., 1] = matrix.entries.imag
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body.tobytes())


def load_matrix(path) -> SampledMatrix:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != _MAGIC:
            raise ValueError(f"{path}: not a matrix cache file")
        version, N = struct.unpack("<IQ", header[4:])
        if version != _CACHE_VERSION:
            raise ValueError(f"{path}: unsupported cache version {version}")
        body = np.frombuffer(fh.read(), dtype="<f8")
    if body.size != 2 * N * N:
        raise ValueError(f"{path}: truncated payload")
    body = body.reshape(N, N, 2)
    return SampledMatrix(N=int(N), entries=body[..., 0] + 1j * body[..., 1])
