"""Experiment driver.

Subcommands either sample an ensemble and run a statistics estimator
over it, or run one of the closed-form verification suites; every run
writes CSV data plus a JSON manifest. Output bytes are determined by
(config, seed) alone: sampling uses counter-based streams keyed by
sample index and batches merge in index order regardless of worker
count.

Exit codes: 0 pass, 1 usage or invalid config, 2 verification failure,
3 I/O failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .eig import Spectrum, eigenvalues, load_spectra
from .lattice import build_lattice, sample, sample_rng, variance_profile

KINDS = (
    "dos",
    "r2",
    "f2",
    "g2",
    "spacing",
    "saddle-scan",
    "saddle-verify",
    "grassmann-verify",
    "hciz-verify",
    "closure",
)
ENSEMBLE_KINDS = ("dos", "r2", "f2", "g2", "spacing")
BATCH = 32  # samples per worker task
SQRT2 = math.sqrt(2.0)

# keys that partition the work without changing the physics; they are
# excluded from the merge-compatibility hash
PARTITION_KEYS = ("samples", "index_offset", "workers", "out", "cache")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    kind: str
    seed: int = 0
    samples: int = 200
    workers: int = 1
    out: str = ""
    index_offset: int = 0
    cache: bool = True
    d: int = 1
    m: int = 2
    alpha: float = 0.2
    W: int = 50
    lam0: float = 0.0
    window: float = 4.0
    sbin: float = 0.25
    smax: float = 3.25
    eps: tuple = (0.5, 1.0, 2.0)
    h: float = 0.05
    xi1: float = 0.2
    xi2: float = -0.5
    bins: int = 50
    n_points: int = 100_000
    functional: str = "all"
    extrapolate: bool = True
    include_self: bool = False


_KIND_DEFAULTS = {
    "g2": {"eps": (1.0,)},
    "closure": {"eps": (1e-8,)},
    "f2": {"smax": 3.0},
}

_BOOL_WORDS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _coerce(key: str, raw: str):
    kind_of = {f.name: f.type for f in fields(RunConfig)}
    if key not in kind_of:
        raise UsageError(f"unknown config key {key!r}")
    if key in ("cache", "extrapolate", "include_self"):
        word = raw.strip().lower()
        if word not in _BOOL_WORDS:
            raise UsageError(f"{key} must be true/false, got {raw!r}")
        return _BOOL_WORDS[word]
    if key == "eps":
        try:
            return tuple(float(p) for p in raw.split(","))
        except ValueError:
            raise UsageError(f"eps must be comma-separated floats, got {raw!r}")
    py = {"int": int, "float": float, "str": str}.get(
        kind_of[key] if isinstance(kind_of[key], str) else kind_of[key].__name__
    )
    try:
        return py(raw)
    except (TypeError, ValueError):
        raise UsageError(f"bad value for {key}: {raw!r}")


def parse_config_text(text: str) -> dict:
    """Flat key=value lines; '#' starts a comment; blanks ignored."""
    out = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {ln}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        out[key] = _coerce(key, raw)
    return out


def validate_config(cfg: RunConfig) -> None:
    if cfg.kind not in KINDS:
        raise UsageError(f"kind must be one of {KINDS}, got {cfg.kind!r}")
    if cfg.seed < 0:
        raise UsageError(f"seed must be >= 0, got {cfg.seed}")
    if cfg.samples < 1:
        raise UsageError(f"samples must be >= 1, got {cfg.samples}")
    if cfg.workers < 1:
        raise UsageError(f"workers must be >= 1, got {cfg.workers}")
    if cfg.index_offset < 0:
        raise UsageError(f"index_offset must be >= 0, got {cfg.index_offset}")
    if cfg.d < 1 or cfg.m < 1:
        raise UsageError(f"lattice needs d >= 1 and m >= 1, got d={cfg.d} m={cfg.m}")
    if not 0.0 <= cfg.alpha < 1.0 / (4 * cfg.d):
        raise UsageError(
            f"alpha must satisfy 0 <= alpha < 1/(4d) = {1.0 / (4 * cfg.d)}, got {cfg.alpha}"
        )
    if cfg.W < 1:
        raise UsageError(f"W must be >= 1, got {cfg.W}")
    if cfg.kind in ("r2", "f2", "g2", "spacing", "closure") and not abs(cfg.lam0) < SQRT2:
        raise UsageError(f"|lam0| must be < sqrt(2) for {cfg.kind} runs, got {cfg.lam0}")
    if cfg.kind.startswith("saddle") and not abs(cfg.lam0) < 2.0:
        raise UsageError(f"|lam0| must be < 2 for saddle runs, got {cfg.lam0}")
    if cfg.sbin <= 0 or cfg.smax <= cfg.sbin:
        raise UsageError(f"need 0 < sbin < smax, got sbin={cfg.sbin} smax={cfg.smax}")
    if cfg.kind in ("r2", "spacing"):
        n_dim = cfg.W * cfg.m**cfg.d
        if cfg.window <= 0 or cfg.window > 0.05 * n_dim:
            raise UsageError(
                f"window must lie in (0, 0.05 N] = (0, {0.05 * n_dim}], got {cfg.window}"
            )
        if cfg.kind == "r2" and cfg.smax >= 2.0 * cfg.window:
            raise UsageError("smax must stay below the pair window diameter")
    if any(e < 0 for e in cfg.eps) or (cfg.kind != "closure" and any(e == 0 for e in cfg.eps)):
        raise UsageError(f"eps values must be positive, got {cfg.eps}")
    if cfg.h <= 0:
        raise UsageError(f"h must be positive, got {cfg.h}")
    if cfg.bins < 1:
        raise UsageError(f"bins must be >= 1, got {cfg.bins}")
    if cfg.n_points < 1:
        raise UsageError(f"n_points must be >= 1, got {cfg.n_points}")
    if cfg.functional not in ("phase", "radial", "ray", "all"):
        raise UsageError(f"functional must be phase|radial|ray|all, got {cfg.functional!r}")


def _canon(value) -> str:
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_hash(cfg: RunConfig, physics_only: bool = False) -> str:
    items = []
    for f in fields(RunConfig):
        if physics_only and f.name in PARTITION_KEYS:
            continue
        items.append(f"{f.name}={_canon(getattr(cfg, f.name))}")
    return hashlib.sha256("\n".join(sorted(items)).encode()).hexdigest()


# ---------------------------------------------------------------------------
# deterministic parallel sampling


def _sample_batch(payload):
    d, m, alpha, w_block, seed, indices = payload
    profile = variance_profile(build_lattice(d, m), alpha, w_block)
    rows = []
    for i in indices:
        mat = sample(profile, sample_rng(seed, i), provenance=(seed, i))
        rows.append((i, eigenvalues(mat).values))
    return rows


def generate_spectra(cfg: RunConfig) -> list[Spectrum]:
    """Sample and diagonalize cfg.samples matrices, index-ordered.

    Results are independent of worker count: each sample's stream is
    keyed by (seed, index) and batches are merged in index order.
    """
    indices = list(range(cfg.index_offset, cfg.index_offset + cfg.samples))
    batches = [indices[k : k + BATCH] for k in range(0, len(indices), BATCH)]
    payloads = [(cfg.d, cfg.m, cfg.alpha, cfg.W, cfg.seed, tuple(b)) for b in batches]
    if cfg.workers == 1:
        results = [_sample_batch(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_sample_batch, payloads))
    out = []
    for rows in results:
        for i, vals in rows:
            out.append(Spectrum(values=vals, N=vals.shape[0], provenance=(cfg.seed, i)))
    return out


def _spectra_csv(spectra) -> str:
    lines = []
    for s in spectra:
        seed, index = s.provenance if s.provenance is not None else (-1, -1)
        vals = ",".join("%.17g" % v for v in s.values)
        lines.append(f"{seed},{index},{s.N},{vals}")
    return "\n".join(lines) + "\n"


def _load_cached_spectra(cfg: RunConfig, out_dir: str):
    """Reuse spectra.csv when the previous manifest hashes identically."""
    spath = os.path.join(out_dir, "spectra.csv")
    mpath = os.path.join(out_dir, "manifest.json")
    if not (cfg.cache and os.path.exists(spath) and os.path.exists(mpath)):
        return None
    try:
        with open(mpath, "r", encoding="ascii") as fh:
            manifest = json.load(fh)
    except (OSError, ValueError):
        return None
    if manifest.get("config_hash") != config_hash(cfg):
        return None
    return load_spectra(spath)


# ---------------------------------------------------------------------------
# CSV builders


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    return "%.17g" % x


def _csv(header: str, rows) -> str:
    return "\n".join([header] + [",".join(_fmt(c) for c in row) for row in rows]) + "\n"


def _check_table(checks) -> tuple[str, bool]:
    """checks: iterable of (name, value, tolerance). Returns CSV + pass flag."""
    lines = ["check,value,tolerance,status"]
    ok = True
    for name, value, tol in checks:
        good = value <= tol
        ok = ok and good
        lines.append(f"{name},{_fmt(value)},{_fmt(tol)},{'PASS' if good else 'FAIL'}")
    return "\n".join(lines) + "\n", ok


# ---------------------------------------------------------------------------
# subcommand pipelines; each returns (files dict, passed flag)


def _run_dos(cfg, spectra):
    from .stats import estimate_dos, ks_statistic, semicircle_cdf, semicircle_density

    edges = np.linspace(-2.5, 2.5, cfg.bins + 1)
    est = estimate_dos(spectra, edges)
    centers = (edges[:-1] + edges[1:]) / 2.0
    rows = zip(edges[:-1], edges[1:], est.counts, est.density, semicircle_density(centers))
    csv = _csv("lambda_lo,lambda_hi,count,density,semicircle", rows)
    allv = np.concatenate([s.values for s in spectra])
    ks = ks_statistic(allv, semicircle_cdf)
    summary = _csv("quantity,value", [("ks_to_semicircle", ks), ("eigenvalues", allv.size)])
    return {"dos.csv": csv, "dos_summary.csv": summary}, True


def _run_r2(cfg, spectra):
    from .stats import estimate_R2_pairs, sine_kernel_prediction

    edges = np.arange(cfg.sbin, cfg.smax + cfg.sbin / 2.0, cfg.sbin)
    est = estimate_R2_pairs(spectra, cfg.lam0, cfg.window, edges)
    rows = zip(est.grid, est.r2_hat, est.stderr, sine_kernel_prediction(est.grid))
    return {"r2.csv": _csv("s,r2,stderr,prediction", rows)}, True


def _run_f2(cfg, spectra):
    from .stats import f2_correlation_curve, sine_kernel_prediction

    grid = np.arange(cfg.sbin, cfg.smax + cfg.sbin / 2.0, cfg.sbin)
    singles = [
        f2_correlation_curve(
            spectra, cfg.lam0, grid, (e,), include_self=cfg.include_self, extrapolate=False
        )
        for e in cfg.eps
    ]
    cols = [grid] + [c.r2_hat for c in singles]
    header = "s," + ",".join("f2_eps%g" % e for e in cfg.eps)
    if cfg.extrapolate and len(cfg.eps) > 1:
        comb = f2_correlation_curve(
            spectra, cfg.lam0, grid, cfg.eps, include_self=cfg.include_self
        )
        cols += [comb.r2_hat, comb.stderr]
        header += ",f2_extrapolated,stderr"
    else:
        cols += [singles[0].stderr]
        header += ",stderr"
    cols.append(sine_kernel_prediction(grid))
    header += ",prediction"
    return {"f2.csv": _csv(header, zip(*cols))}, True


def _run_g2(cfg, spectra):
    from .saddle import spectral_constants
    from .stats import estimate_G2, g2_boundary_derivative

    eps = cfg.eps[0]
    coincidence = estimate_G2(
        spectra, cfg.lam0, eps, cfg.xi1, cfg.xi2, cfg.xi1, cfg.xi2, "+-"
    )
    max_dev = abs(coincidence - 1.0)
    deriv = g2_boundary_derivative(spectra, cfg.lam0, eps, cfg.h)
    k = spectral_constants(cfg.lam0)
    target = -1j * k.root_plus / k.density
    rows = [
        ("coincidence_max_dev", max_dev, 0.0),
        ("derivative_re", deriv.value.real, target.real),
        ("derivative_im", deriv.value.imag, target.imag),
        ("derivative_stderr", deriv.stderr, 0.0),
    ]
    csv = _csv("quantity,value,reference", rows)
    return {"g2.csv": csv}, True


def _run_spacing(cfg, spectra):
    from .stats import spacing_distribution, wigner_surmise_pdf

    est = spacing_distribution(
        spectra, cfg.lam0, cfg.window, np.linspace(0.0, 4.0, cfg.bins + 1)
    )
    centers = (est.edges[:-1] + est.edges[1:]) / 2.0
    rows = zip(
        est.edges[:-1],
        est.edges[1:],
        est.density,
        wigner_surmise_pdf(centers),
        np.exp(-centers),
    )
    return {"spacing.csv": _csv("s_lo,s_hi,density,wigner,poisson", rows)}, True


def _saddle_setup(cfg):
    from .saddle import spectral_constants

    lat = build_lattice(cfg.d, cfg.m)
    k = spectral_constants(
        cfg.lam0, eps=0.5, xi1=0.3, xi2=-0.4, alpha=cfg.alpha, lattice=lat
    )
    return lat, k


def _run_saddle_scan(cfg):
    from .saddle import scan_functional

    _, k = _saddle_setup(cfg)
    names = ("phase", "radial", "ray") if cfg.functional == "all" else (cfg.functional,)
    rows = []
    ok = True
    for name in names:
        vals = scan_functional(name, k, cfg.alpha, cfg.n_points, seed=cfg.seed)
        lo = float(vals.real.min())
        rows.append((name, cfg.n_points, lo, float(vals.real.mean())))
        ok = ok and lo >= -1e-10
    header = "functional,n_points,min_real,mean_real"
    csv = "\n".join(
        [header] + [f"{n},{p},{_fmt(lo)},{_fmt(mean)}" for n, p, lo, mean in rows]
    ) + "\n"
    return {"saddle_scan.csv": csv}, ok


def _run_saddle_verify(cfg):
    from .saddle import (
        closure_constant,
        enumerate_saddle_labels,
        eval_phase_functional,
        eval_radial_functional,
        eval_ray_functional,
        label_coordinates,
        label_matrices,
        minimize_functional,
        saddle_derivative_check,
        superdeterminant,
    )

    lat, k = _saddle_setup(cfg)
    n = lat.n_sites
    labels = enumerate_saddle_labels(n)
    phase_re = radial_abs = sdet_abs = deriv = 0.0
    ray_abs = 0.0
    for label in labels:
        c = label_coordinates(label, k, n)
        phase_re = max(phase_re, abs(eval_phase_functional(c, k, cfg.alpha).real))
        radial_abs = max(radial_abs, abs(eval_radial_functional(c, k, cfg.alpha)))
        if label.kind == "plus":
            ray_abs = abs(eval_ray_functional(c, k, cfg.alpha))
        us, bs = label_matrices(label, k, n)
        sdet_abs = max(sdet_abs, abs(superdeterminant(us, bs, cfg.alpha, lat)))
        deriv = max(deriv, saddle_derivative_check(label, k, cfg.alpha, h=1e-4))
    checks = [
        ("phase_label_real_part", phase_re, 1e-12),
        ("radial_label_value", radial_abs, 1e-12),
        ("ray_label_value", ray_abs, 1e-12),
        ("superdeterminant_at_labels", sdet_abs, 1e-10),
        ("first_derivatives", deriv, 1e-6),
    ]
    for which in ("phase", "radial", "ray"):
        res = minimize_functional(which, k, cfg.alpha, restarts=12, seed=cfg.seed)
        checks.append((f"min_{which}_value", abs(res.value), 1e-8))
        checks.append((f"min_{which}_distance", res.distance, 1e-4))
    if abs(cfg.lam0) < SQRT2:
        checks.append(("closure_constant_minus_one", abs(closure_constant(cfg.lam0) - 1.0), 1e-12))
    csv, ok = _check_table(checks)
    return {"saddle_verify.csv": csv}, ok


def _run_grassmann_verify(cfg):
    from .grassmann import (
        gaussian_berezin,
        verify_superbosonization_p1,
        verify_superdeterminant,
    )

    rng = np.random.default_rng(cfg.seed)
    worst_det = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 7))
        a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        worst_det = max(worst_det, abs(gaussian_berezin(a) - np.linalg.det(a)))
    worst_sdet = 0.0
    for kk in (1, 2):
        a = rng.standard_normal((kk, kk)) + 1j * rng.standard_normal((kk, kk))
        g = rng.standard_normal((kk, kk)) + 1j * rng.standard_normal((kk, kk))
        b = (g + g.conj().T) / 2.0 + (2.0 + kk) * np.eye(kk)  # positive definite
        worst_sdet = max(worst_sdet, verify_superdeterminant(a, b, kk))
    worst_boso = 0.0
    for n in (1, 2, 3):
        for alpha, beta, gamma, delta in ((0, 0, 0, 0), (1, 0, 0, 1), (1, 1, 1, 1), (2, 1, 0, 0)):
            res = verify_superbosonization_p1(n, alpha, beta, gamma, delta)
            worst_boso = max(worst_boso, res.residual)
    csv, ok = _check_table(
        [
            ("berezin_vs_determinant", worst_det, 1e-12),
            ("superdeterminant_identity", worst_sdet, 1e-10),
            ("superbosonization_p1", worst_boso, 1e-8),
        ]
    )
    return {"grassmann_verify.csv": csv}, ok


def _run_hciz_verify(cfg):
    from .groupint import hciz_u11, hciz_u2, quad_u11, quad_u2
    from .saddle import (
        compact_coset_average,
        noncompact_coset_average,
        spectral_constants,
    )

    rng = np.random.default_rng(cfg.seed)
    worst_u2 = 0.0
    for _ in range(50):
        c = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        d = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        r = complex(rng.uniform(0.2, 1.5), rng.uniform(-0.5, 0.5))
        C, D = np.diag(c), np.diag(d)

        def f_c(el, C=C, D=D, r=r):
            u = el.matrix()
            return np.exp(r * np.trace(C @ u.conj().T @ D @ u))

        closed = hciz_u2(C, D, r)
        worst_u2 = max(worst_u2, abs(quad_u2(f_c) - closed) / max(1.0, abs(closed)))
    worst_u11 = 0.0
    checked = 0
    while checked < 50:
        c = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        d = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        r = complex(rng.uniform(0.2, 1.5), rng.uniform(-0.5, 0.5))
        if (r * (c[0] - c[1]) * (d[0] - d[1])).real < 0.3:
            continue
        C, D = np.diag(c), np.diag(d)

        def f_n(el, C=C, D=D, r=r):
            t = el.matrix()
            ti = np.array([[t[1, 1], -t[0, 1]], [-t[1, 0], t[0, 0]]])
            return np.exp(-r * np.trace(C @ ti @ D @ t))

        closed = hciz_u11(C, D, r)
        worst_u11 = max(worst_u11, abs(quad_u11(f_n) - closed) / abs(closed))
        checked += 1

    # coset spot-check at a fixed interior energy with proven quadrature decay
    k = spectral_constants(0.7, eps=0.5, xi1=0.3, xi2=-0.4, n_sites=1)
    qd = np.diag(k.drive)
    us = np.array([[np.exp(0.4j), np.exp(-2.1j)]])
    closed_u = compact_coset_average(us, k)

    def f_avg_u(el):
        u = el.matrix()
        return np.exp(-np.trace(np.diag(us[0]) @ u.conj().T @ qd @ u))

    dev_u = abs(quad_u2(f_avg_u) - closed_u) / abs(closed_u)
    ep = np.exp(1j * k.root_angle)
    bs = np.array([[1.2 * ep, -0.6 / ep]])
    closed_b = noncompact_coset_average(bs, k)

    def f_avg_b(el):
        t = el.matrix()
        ti = np.array([[t[1, 1], -t[0, 1]], [-t[1, 0], t[0, 0]]])
        mm = ti @ qd @ t
        return np.exp(bs[0, 0] * mm[0, 0] + bs[0, 1] * mm[1, 1])

    dev_b = abs(quad_u11(f_avg_b) - closed_b) / abs(closed_b)
    csv, ok = _check_table(
        [
            ("compact_quadrature", worst_u2, 1e-6),
            ("noncompact_quadrature", worst_u11, 1e-6),
            ("compact_average", dev_u, 1e-6),
            ("noncompact_average", dev_b, 1e-6),
        ]
    )
    return {"hciz_verify.csv": csv}, ok


def _run_closure(cfg):
    from .saddle import closure_identity
    from .stats import sine_kernel_prediction

    grid = np.arange(cfg.sbin, cfg.smax + cfg.sbin / 2.0, cfg.sbin)
    vals = [closure_identity(s / 2.0, -s / 2.0, cfg.lam0, cfg.eps[0]) for s in grid]
    preds = sine_kernel_prediction(grid)
    rows = zip(grid, vals, preds)
    ok = bool(np.max(np.abs(np.array(vals) - preds)) <= 1e-6)
    return {"closure.csv": _csv("s,value,prediction", rows)}, ok


# ---------------------------------------------------------------------------
# orchestration


def run(cfg: RunConfig, out_dir: str) -> tuple[int, dict]:
    """Execute one configured run; returns (exit_code, manifest)."""
    started = datetime.now(timezone.utc).isoformat()
    batches = []
    if cfg.kind in ENSEMBLE_KINDS:
        spectra = _load_cached_spectra(cfg, out_dir)
        if spectra is None:
            spectra = generate_spectra(cfg)
        batches = [
            min(BATCH, cfg.samples - k) for k in range(0, cfg.samples, BATCH)
        ]
        files, passed = {
            "dos": _run_dos,
            "r2": _run_r2,
            "f2": _run_f2,
            "g2": _run_g2,
            "spacing": _run_spacing,
        }[cfg.kind](cfg, spectra)
        if cfg.cache:
            files["spectra.csv"] = _spectra_csv(spectra)
    else:
        files, passed = {
            "saddle-scan": _run_saddle_scan,
            "saddle-verify": _run_saddle_verify,
            "grassmann-verify": _run_grassmann_verify,
            "hciz-verify": _run_hciz_verify,
            "closure": _run_closure,
        }[cfg.kind](cfg)

    os.makedirs(out_dir, exist_ok=True)
    outputs = {}
    for name, content in files.items():
        with open(os.path.join(out_dir, name), "w", encoding="ascii", newline="") as fh:
            fh.write(content)
        outputs[name] = hashlib.sha256(content.encode("ascii")).hexdigest()
    manifest = {
        "version": __version__,
        "config": {f.name: _json_value(getattr(cfg, f.name)) for f in fields(RunConfig)},
        "config_hash": config_hash(cfg),
        "physics_hash": config_hash(cfg, physics_only=True),
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "batches": batches,
        "outputs": outputs,
        "status": "pass" if passed else "fail",
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="ascii") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return (0 if passed else 2), manifest


def _json_value(v):
    return list(v) if isinstance(v, tuple) else v


def merge_results(manifest_paths, out_dir: str) -> tuple[int, dict]:
    """Re-estimate over the union of cached spectra from partial runs.

    All partials must share the physics hash; their spectra streams are
    concatenated in (seed, index) order, so the merge equals the
    single-pass run over the union.
    """
    if not manifest_paths:
        raise UsageError("merge needs at least one manifest")
    manifests = []
    for p in manifest_paths:
        with open(p, "r", encoding="ascii") as fh:
            try:
                man = json.load(fh)
            except ValueError as exc:
                raise UsageError(f"{p}: not a manifest: {exc}")
        if "physics_hash" not in man or "config" not in man:
            raise UsageError(f"{p}: not a run manifest")
        manifests.append((p, man))
    phys = manifests[0][1]["physics_hash"]
    for p, man in manifests:
        if man["physics_hash"] != phys:
            raise UsageError(f"{p}: physics hash differs; refusing to merge")
        if "spectra.csv" not in man.get("outputs", {}):
            raise UsageError(f"{p}: partial run has no cached spectra to merge")
    spectra = []
    for p, _ in manifests:
        spectra.extend(load_spectra(os.path.join(os.path.dirname(p), "spectra.csv")))
    spectra.sort(key=lambda s: s.provenance)
    base = manifests[0][1]["config"]
    cfg = RunConfig(
        **{
            **{k: tuple(v) if isinstance(v, list) else v for k, v in base.items()},
            "samples": len(spectra),
            "index_offset": 0,
            "cache": True,
        }
    )
    files, passed = {
        "dos": _run_dos,
        "r2": _run_r2,
        "f2": _run_f2,
        "g2": _run_g2,
        "spacing": _run_spacing,
    }[cfg.kind](cfg, spectra)
    files["spectra.csv"] = _spectra_csv(spectra)
    os.makedirs(out_dir, exist_ok=True)
    outputs = {}
    for name, content in files.items():
        with open(os.path.join(out_dir, name), "w", encoding="ascii", newline="") as fh:
            fh.write(content)
        outputs[name] = hashlib.sha256(content.encode("ascii")).hexdigest()
    manifest = {
        "version": __version__,
        "merged_from": [p for p, _ in manifests],
        "physics_hash": phys,
        "samples": len(spectra),
        "outputs": outputs,
        "status": "pass" if passed else "fail",
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="ascii") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return (0 if passed else 2), manifest


# ---------------------------------------------------------------------------
# argument handling


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with 2; usage is 1 here
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="blockband", description=__doc__)
    sub = parser.add_subparsers(dest="command")
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--samples", type=int, default=None)
    mp = sub.add_parser("merge")
    mp.add_argument("manifests", nargs="+")
    mp.add_argument("--out", default=None)
    return parser


def build_config(command: str, args) -> RunConfig:
    raw = dict(_KIND_DEFAULTS.get(command, {}))
    if args.config is not None:
        try:
            with open(args.config, "r", encoding="ascii") as fh:
                text = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}")
        file_vals = parse_config_text(text)
        if file_vals.pop("kind", command) != command:
            raise UsageError("config kind does not match the subcommand")
        raw.update(file_vals)
    for key in ("seed", "workers", "out", "samples"):
        if getattr(args, key) is not None:
            raw[key] = getattr(args, key)
    cfg = RunConfig(kind=command, **raw)
    validate_config(cfg)
    return cfg


def _resolve_out(cfg: RunConfig) -> str:
    if cfg.out:
        return cfg.out
    root = os.environ.get("BLOCKBAND_OUT", os.path.join(os.getcwd(), "runs"))
    return os.path.join(root, cfg.kind)


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        if args.command == "merge":
            out = args.out or os.path.join(
                os.environ.get("BLOCKBAND_OUT", os.path.join(os.getcwd(), "runs")), "merge"
            )
            code, manifest = merge_results(args.manifests, out)
            print(f"merged {manifest['samples']} samples -> {out} [{manifest['status']}]")
            return code
        cfg = build_config(args.command, args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    out = _resolve_out(cfg)
    try:
        code, manifest = run(cfg, out)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    for name in manifest["outputs"]:
        print(f"wrote {os.path.join(out, name)}")
    print(f"status: {manifest['status']}")
    return code


if __name__ == "__main__":
    sys.exit(main())
