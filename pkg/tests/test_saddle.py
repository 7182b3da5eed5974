"""Saddle constants, functionals, determinant, and closure identity."""

import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockband.groupint import quad_u2, quad_u11
from blockband.lattice import build_lattice, laplacian
from blockband.saddle import (
    ExpansionCoefficients,
    SaddleCoordinates,
    SaddlePointLabel,
    closure_constant,
    closure_identity,
    compact_coset_average,
    compact_offset_response,
    enumerate_saddle_labels,
    eval_phase_functional,
    eval_radial_functional,
    eval_ray_functional,
    label_coordinates,
    label_matrices,
    minimize_functional,
    noncompact_coset_average,
    noncompact_offset_response,
    random_coordinates,
    saddle_derivative_check,
    saddle_expansion_coefficients,
    scan_functional,
    spectral_constants,
    superdeterminant,
    superdeterminant_factors,
)
from blockband.saddle import _wrap_angle

LAT = build_lattice(1, 2)
ALPHA = 0.2
K = spectral_constants(0.7, eps=0.5, xi1=0.3, xi2=-0.4, alpha=ALPHA, lattice=LAT)


def _vmat(v, th):
    w = math.sqrt(1.0 - v * v)
    return np.array(
        [[w, v * cmath.exp(1j * th)], [-v * cmath.exp(-1j * th), w]]
    )


def _tmat(t, sg):
    s = math.sqrt(1.0 + t * t)
    return np.array([[s, t * cmath.exp(1j * sg)], [t * cmath.exp(-1j * sg), s]])


# ---------------------------------------------------------------------------
# constants


def test_constants_at_band_center():
    k = spectral_constants(0.0)
    assert k.root_plus == 1.0 + 0.0j
    assert k.root_minus == -1.0 + 0.0j
    assert k.root_gap == 2.0
    assert k.density == pytest.approx(1.0 / math.pi, rel=1e-15)
    assert k.root_angle == 0.0


def test_constants_off_center_example():
    k = spectral_constants(1.0)
    assert k.root_plus == pytest.approx((math.sqrt(3.0) + 1.0j) / 2.0, abs=1e-15)
    assert k.root_minus == pytest.approx((-math.sqrt(3.0) + 1.0j) / 2.0, abs=1e-15)


def test_action_shift_example():
    k = spectral_constants(0.0, n_sites=2)
    assert k.action_shift == 2.0


def test_constants_root_identities_random():
    rng = np.random.default_rng(20260816)
    for lam in rng.uniform(-1.999, 1.999, 100):
        k = spectral_constants(float(lam))
        assert abs(k.root_plus * k.root_minus + 1.0) < 1e-14
        assert abs(abs(k.root_plus) - 1.0) < 1e-14
        assert abs(abs(k.root_minus) - 1.0) < 1e-14
        assert abs(k.root_plus + k.root_minus - 1j * lam) < 1e-14
        assert abs(
            k.root_plus**2 + k.root_minus**2 + 2.0 - k.root_gap**2
        ) < 1e-13
        assert abs(1.0 + 1.0 / (k.root_plus * k.root_minus)) < 1e-14
        assert abs(k.root_gap - 2.0 * math.pi * k.density) < 1e-13
        assert k.action_plus.real == pytest.approx(
            (2.0 + lam * lam) / 4.0, abs=1e-13
        )
        assert k.action_minus.real == pytest.approx(
            (2.0 + lam * lam) / 4.0, abs=1e-13
        )


def test_constants_rejects_edge_energy():
    with pytest.raises(ValueError, match="lambda0"):
        spectral_constants(2.0)
    with pytest.raises(ValueError, match="lambda0"):
        spectral_constants(-2.5)
    with pytest.raises(ValueError, match="eps"):
        spectral_constants(0.3, eps=-0.1)


def test_probe_energies_and_drive():
    k = spectral_constants(0.5, eps=0.25, xi1=0.1, xi2=-0.2, xi1p=0.3, xi2p=0.4)
    N = 100
    assert k.z1(N) == pytest.approx(0.5 + (0.1 / k.density + 0.25j) / N)
    assert k.z2(N) == pytest.approx(0.5 + (-0.2 / k.density + 0.25j) / N)
    assert k.z1p(N) == pytest.approx(0.5 + (0.3 / k.density + 0.25j) / N)
    assert k.z2p(N) == pytest.approx(0.5 + (0.4 / k.density + 0.25j) / N)
    q = k.drive
    assert q[0] == pytest.approx(1j * 0.1 / k.density - 0.25)
    assert q[1] == pytest.approx(-1j * 0.2 / k.density + 0.25)
    assert np.allclose(np.diag(k.offsets), [0.1, -0.2])
    assert np.allclose(np.diag(k.offsets_first_primed), [0.3, -0.2])
    assert np.allclose(np.diag(k.offsets_second_primed), [0.1, 0.4])


def test_half_separation():
    assert K.half_separation == pytest.approx(
        complex((-0.4 - 0.3) / (2.0 * K.density), -0.5)
    )


def test_quadratic_form_operators_conjugate_pair():
    red_p = K.hessian_plus_reduced()
    red_m = K.hessian_minus_reduced()
    assert np.allclose(red_m, red_p.conj(), atol=1e-14)
    assert np.allclose(
        red_p, K.hessian_plus / K.root_plus**2, atol=1e-14
    )
    k_bare = spectral_constants(0.3)
    with pytest.raises(ValueError, match="lattice"):
        k_bare.hessian_plus_reduced()


# ---------------------------------------------------------------------------
# coordinates and labels


def test_coordinates_validation():
    ok = random_coordinates(2, np.random.default_rng(0))
    assert ok.n_sites == 2
    with pytest.raises(ValueError, match="nonnegative"):
        SaddleCoordinates(
            u_angles=np.zeros((2, 2)),
            b_radii=np.array([[1.0, -0.1], [1.0, 1.0]]),
            v=np.zeros(2),
            theta=np.zeros(2),
            t=np.zeros(2),
            sigma=np.zeros(2),
        )
    with pytest.raises(ValueError, match="gauge"):
        SaddleCoordinates(
            u_angles=np.zeros((2, 2)),
            b_radii=np.ones((2, 2)),
            v=np.array([0.5, 0.0]),
            theta=np.zeros(2),
            t=np.zeros(2),
            sigma=np.zeros(2),
        )
    with pytest.raises(ValueError, match="shape"):
        SaddleCoordinates(
            u_angles=np.zeros((2, 2)),
            b_radii=np.ones((2, 2)),
            v=np.zeros(3),
            theta=np.zeros(2),
            t=np.zeros(2),
            sigma=np.zeros(2),
        )


def test_label_validation_and_enumeration():
    labels = enumerate_saddle_labels(3)
    assert len(labels) == 2**3 + 2
    kinds = {lab.kind for lab in labels}
    assert kinds == {"mixed", "plus", "minus"}
    with pytest.raises(ValueError, match="branch"):
        SaddlePointLabel(kind="mixed", branches=(0, 2))
    with pytest.raises(ValueError, match="branches"):
        SaddlePointLabel(kind="plus", branches=(0, 1))
    with pytest.raises(ValueError, match="kind"):
        SaddlePointLabel(kind="other")


@given(st.lists(st.integers(0, 1), min_size=1, max_size=4))
@settings(max_examples=40, deadline=None)
def test_mixed_labels_coincide_as_matrices(bits):
    """Branch flips relative to site 0 are gauge: the v = 1 rotation swaps
    the columns back, so every site carries the same matrix pair and only
    the first branch picks which of the two global assignments it is."""
    branches = tuple(bits)
    label = SaddlePointLabel(kind="mixed", branches=branches)
    us, bs = label_matrices(label, K, len(bits))
    expect = K.diag_pm if bits[0] == 0 else K.diag_mp
    for u, b in zip(us, bs):
        assert np.allclose(u, expect, atol=1e-14)
        assert np.allclose(b, K.diag_pm, atol=1e-14)


@given(st.floats(-1e4, 1e4))
def test_wrap_angle(x):
    w = float(_wrap_angle(np.array(x)))
    assert -math.pi < w <= math.pi
    assert abs(cmath.exp(1j * w) - cmath.exp(1j * x)) < 1e-9


# ---------------------------------------------------------------------------
# functional values at the labeled family


@pytest.mark.parametrize("lam", [0.0, 0.7, -0.7, 1.3])
def test_functionals_vanish_on_labels(lam):
    k = spectral_constants(lam, eps=0.5, xi1=0.3, xi2=-0.4, alpha=ALPHA, lattice=LAT)
    n = LAT.n_sites
    for label in enumerate_saddle_labels(n):
        c = label_coordinates(label, k, n)
        kv = eval_phase_functional(c, k, ALPHA)
        lv = eval_radial_functional(c, k, ALPHA)
        assert abs(lv) < 1e-12
        if label.kind == "plus":
            assert abs(kv) < 1e-12
            assert abs(eval_ray_functional(c, k, ALPHA)) < 1e-12
        else:
            # split or reversed columns leave a purely imaginary value
            assert abs(kv.real) < 1e-12


def test_phase_value_on_split_label_is_action_gap():
    """With both roots occupied the value is the (imaginary) action gap
    per minus-column; positive energies keep the principal branch."""
    for lam in (0.0, 0.7, 1.3):
        k = spectral_constants(lam, eps=0.5, alpha=ALPHA, lattice=LAT)
        n = LAT.n_sites
        c = label_coordinates(SaddlePointLabel("mixed", (0,) * n), k, n)
        kv = eval_phase_functional(c, k, ALPHA)
        assert kv == pytest.approx(n * (k.action_plus - k.action_minus), abs=1e-12)
        c3 = label_coordinates(SaddlePointLabel("minus"), k, n)
        kv3 = eval_phase_functional(c3, k, ALPHA)
        assert kv3 == pytest.approx(
            2 * n * (k.action_plus - k.action_minus), abs=1e-12
        )


def test_eval_requires_lattice_and_ray_group():
    k_bare = spectral_constants(0.7)
    c = random_coordinates(2, np.random.default_rng(1))
    with pytest.raises(ValueError, match="lattice"):
        eval_phase_functional(c, k_bare, ALPHA)
    c_no_ray = SaddleCoordinates(
        u_angles=np.zeros((2, 2)),
        b_radii=np.ones((2, 2)),
        v=np.zeros(2),
        theta=np.zeros(2),
        t=np.zeros(2),
        sigma=np.zeros(2),
    )
    with pytest.raises(ValueError, match="a_radii"):
        eval_ray_functional(c_no_ray, K, ALPHA)


# ---------------------------------------------------------------------------
# scalar decomposition against the matrix route


@pytest.mark.parametrize("d,m", [(1, 2), (1, 3), (2, 2)])
def test_functionals_match_matrix_route(d, m):
    lat = build_lattice(d, m)
    alpha = 0.2 / d
    k = spectral_constants(0.9, eps=0.5, xi1=0.3, xi2=-0.4, alpha=alpha, lattice=lat)
    n = lat.n_sites
    rng = np.random.default_rng(d * 100 + m)
    ep = cmath.exp(1j * k.root_angle)
    for _ in range(10):
        c = random_coordinates(n, rng)
        u = np.exp(1j * c.u_angles)
        q = u * u / 2.0 - 1j * k.lambda0 * u - 1j * c.u_angles
        site = np.sum(k.action_plus - q)
        x = [
            _vmat(c.v[j], c.theta[j]).conj().T
            @ np.diag(u[j])
            @ _vmat(c.v[j], c.theta[j])
            for j in range(n)
        ]
        cross = sum(
            (alpha / 2.0) * np.trace((x[a] - x[b]) @ (x[a] - x[b]))
            for a, b in lat.edges
        )
        assert abs(site + cross - eval_phase_functional(c, k, alpha)) < 1e-12

        b1 = c.b_radii[:, 0] * ep
        b2 = c.b_radii[:, 1] / ep
        col1 = (
            b1 * b1 / 2.0
            - 1j * k.lambda0 * b1
            - (np.log(c.b_radii[:, 0]) + 1j * k.root_angle)
            - k.action_plus
        )
        col2 = (
            b2 * b2 / 2.0
            + 1j * k.lambda0 * b2
            - (np.log(c.b_radii[:, 1]) + 1j * (math.pi - k.root_angle))
            - k.action_minus
        )
        site = np.sum(col1 + col2)
        bmat = [
            np.linalg.inv(_tmat(c.t[j], c.sigma[j]))
            @ np.diag([b1[j], -b2[j]])
            @ _tmat(c.t[j], c.sigma[j])
            for j in range(n)
        ]
        cross = sum(
            -(alpha / 2.0) * np.trace((bmat[a] - bmat[b]) @ (bmat[a] - bmat[b]))
            for a, b in lat.edges
        )
        got = eval_radial_functional(c, k, alpha)
        assert abs(site + cross - got) < 1e-11 * max(1.0, abs(got))

        a_ = c.a_radii * ep
        qa = a_ * a_ / 2.0 - 1j * k.lambda0 * a_ - (np.log(c.a_radii) + 1j * k.root_angle)
        site = np.sum(qa - k.action_plus)
        xa = [
            _vmat(c.a_v[j], c.a_theta[j]).conj().T
            @ np.diag(a_[j])
            @ _vmat(c.a_v[j], c.a_theta[j])
            for j in range(n)
        ]
        cross = sum(
            -(alpha / 2.0) * np.trace((xa[a] - xa[b]) @ (xa[a] - xa[b]))
            for a, b in lat.edges
        )
        assert abs(site + cross - eval_ray_functional(c, k, alpha)) < 1e-12


def test_radial_single_site_closed_form():
    """alpha = 0 reduces the radial functional to the per-column site
    terms; the second column pinned at 1 isolates the first."""
    lat1 = build_lattice(1, 1)
    for lam in (0.0, 0.7, -1.1):
        k = spectral_constants(lam, eps=0.5, alpha=0.0, lattice=lat1)
        lam2 = lam * lam
        for r in (0.2, 0.9, 1.0, 2.7):
            c = SaddleCoordinates(
                u_angles=np.zeros((1, 2)),
                b_radii=np.array([[r, 1.0]]),
                v=np.zeros(1),
                theta=np.zeros(1),
                t=np.zeros(1),
                sigma=np.zeros(1),
            )
            val = eval_radial_functional(c, k, 0.0)
            expect = (
                (2.0 - lam2) * (r * r - 1.0) / 4.0
                + lam2 * (r - 1.0) / 2.0
                - math.log(r)
            )
            assert val.real == pytest.approx(expect, abs=1e-13)
            alt = (2.0 - lam2) * (r - 1.0) ** 2 / 4.0 + r - math.log(r) - 1.0
            assert val.real == pytest.approx(alt, abs=1e-13)


def test_radial_real_part_display_with_edges():
    """At t = 0 the real part takes the quadratic-plus-entropy shape in
    the radii alone."""
    k = K
    lam2 = k.lambda0**2
    rng = np.random.default_rng(77)
    for _ in range(10):
        r = rng.uniform(0.2, 3.0, (LAT.n_sites, 2))
        c = SaddleCoordinates(
            u_angles=np.zeros((LAT.n_sites, 2)),
            b_radii=r,
            v=np.zeros(LAT.n_sites),
            theta=np.zeros(LAT.n_sites),
            t=np.zeros(LAT.n_sites),
            sigma=np.zeros(LAT.n_sites),
        )
        val = eval_radial_functional(c, k, ALPHA).real
        edge_sq = sum(np.sum((r[a] - r[b]) ** 2) for a, b in LAT.edges)
        expect = (
            -(2.0 - lam2) / 4.0 * (ALPHA * edge_sq - np.sum((r - 1.0) ** 2))
            + np.sum(r - np.log(r) - 1.0)
        )
        assert val == pytest.approx(expect, abs=1e-12)


def test_ray_single_site_matches_two_columns():
    lat1 = build_lattice(1, 1)
    k = spectral_constants(0.7, eps=0.5, alpha=0.0, lattice=lat1)
    lam2 = k.lambda0**2
    for r in (0.3, 1.0, 1.8):
        c = SaddleCoordinates(
            u_angles=np.zeros((1, 2)),
            b_radii=np.ones((1, 2)),
            v=np.zeros(1),
            theta=np.zeros(1),
            t=np.zeros(1),
            sigma=np.zeros(1),
            a_radii=np.array([[r, r]]),
            a_v=np.zeros(1),
            a_theta=np.zeros(1),
        )
        val = eval_ray_functional(c, k, 0.0)
        single = (
            (2.0 - lam2) * r * r / 4.0
            + lam2 * r / 2.0
            - math.log(r)
            - (2.0 + lam2) / 4.0
        )
        assert val.real == pytest.approx(2.0 * single, abs=1e-13)


# ---------------------------------------------------------------------------
# positivity


@pytest.mark.parametrize("which", ["phase", "radial", "ray"])
def test_scan_real_part_nonnegative(which):
    vals = scan_functional(which, K, ALPHA, 100_000, seed=20260816)
    assert vals.shape == (100_000,)
    assert float(vals.real.min()) >= -1e-10


def test_scan_other_energy_branch():
    k = spectral_constants(-1.1, eps=0.5, alpha=ALPHA, lattice=LAT)
    for which in ("phase", "radial", "ray"):
        vals = scan_functional(which, k, ALPHA, 10_000, seed=3)
        assert float(vals.real.min()) >= -1e-10


def test_scan_rejects_unknown_functional():
    with pytest.raises(ValueError, match="which"):
        scan_functional("other", K, ALPHA, 10, seed=0)


@pytest.mark.parametrize("d,m", [(1, 2), (1, 4), (2, 2), (2, 3)])
def test_edge_form_domination(d, m):
    """-alpha * sum_edges (x_j - x_k)^2 + sum x^2 >= (1 - 4 d alpha) sum x^2
    for real site vectors: each site meets 2d edge endpoints."""
    lat = build_lattice(d, m)
    alpha = 0.9 / (4 * d)
    rng = np.random.default_rng(m + 10 * d)
    for _ in range(200):
        x = rng.standard_normal(lat.n_sites)
        edge = sum((x[a] - x[b]) ** 2 for a, b in lat.edges)
        lhs = -alpha * edge + np.sum(x * x)
        rhs = (1.0 - 4 * d * alpha) * np.sum(x * x)
        assert lhs >= rhs - 1e-12


def test_radial_entropy_bound():
    r = np.logspace(-3, 1, 1000)
    assert np.all(r - np.log(r) - 1.0 >= 0.0)


# ---------------------------------------------------------------------------
# minimization


def test_gradients_match_finite_differences():
    from blockband.saddle import _phase_objective, _radial_objective, _ray_objective
    from blockband.saddle import _chart_setup

    lat = build_lattice(2, 2)
    alpha = 0.05
    k = spectral_constants(0.9, eps=0.5, xi1=0.3, xi2=-0.4, alpha=alpha, lattice=lat)
    rng = np.random.default_rng(42)
    h = 1e-6
    for which, fun in (
        ("phase", _phase_objective),
        ("radial", _radial_objective),
        ("ray", _ray_objective),
    ):
        for _ in range(34):
            x0, _ = _chart_setup(which, lat.n_sites, rng)
            _, grad = fun(x0, k, alpha, lat.edges, lat.n_sites)
            for i in range(len(x0)):
                xp = x0.copy()
                xp[i] += h
                xm = x0.copy()
                xm[i] -= h
                fd = (
                    fun(xp, k, alpha, lat.edges, lat.n_sites)[0]
                    - fun(xm, k, alpha, lat.edges, lat.n_sites)[0]
                ) / (2 * h)
                assert abs(grad[i] - fd) <= 1e-6 * max(1.0, abs(fd))


def test_minimize_radial_reaches_unit_radii():
    k = spectral_constants(0.0, eps=0.5, xi1=0.3, xi2=-0.4, alpha=ALPHA, lattice=LAT)
    res = minimize_functional("radial", k, ALPHA, restarts=12, seed=11)
    assert res.value <= 1e-8
    assert res.distance <= 1e-4
    assert res.converged >= 1
    assert np.allclose(res.coordinates.b_radii, 1.0, atol=1e-4)
    assert np.allclose(res.coordinates.t, 0.0, atol=1e-4)


def test_minimize_ray_reaches_plus_root():
    k = spectral_constants(0.0, eps=0.5, xi1=0.3, xi2=-0.4, alpha=ALPHA, lattice=LAT)
    res = minimize_functional("ray", k, ALPHA, restarts=12, seed=11)
    assert res.value <= 1e-8
    assert res.distance <= 1e-4
    assert res.nearest.kind == "plus"


def test_minimize_phase_lands_on_labeled_family():
    k = spectral_constants(0.0, eps=0.5, xi1=0.3, xi2=-0.4, alpha=ALPHA, lattice=LAT)
    res = minimize_functional("phase", k, ALPHA, restarts=12, seed=11)
    assert res.value <= 1e-8
    assert res.distance <= 1e-4
    assert res.nearest is not None


def test_minimize_validates_arguments():
    with pytest.raises(ValueError, match="restarts"):
        minimize_functional("radial", K, ALPHA, restarts=5)
    with pytest.raises(ValueError, match="which"):
        minimize_functional("bogus", K, ALPHA, restarts=10)


# ---------------------------------------------------------------------------
# superdeterminant


def test_superdeterminant_vanishes_at_every_label():
    n = LAT.n_sites
    for label in enumerate_saddle_labels(n):
        us, bs = label_matrices(label, K, n)
        assert abs(superdeterminant(us, bs, ALPHA, LAT)) < 1e-10


def test_superdeterminant_trivial_point():
    n = LAT.n_sites
    eye = [np.eye(2, dtype=complex)] * n
    val = superdeterminant(eye, eye, 0.0, LAT)
    assert val == pytest.approx(16.0**n, rel=1e-12)


def test_superdeterminant_diagonal_factorization():
    rng = np.random.default_rng(99)
    n = LAT.n_sites
    ud = rng.normal(size=(n, 2)) + 1j * rng.normal(size=(n, 2))
    bd = rng.normal(size=(n, 2)) + 1j * rng.normal(size=(n, 2))
    factors = superdeterminant_factors(ud, bd, ALPHA, LAT)
    direct = superdeterminant(
        [np.diag(ud[j]) for j in range(n)],
        [np.diag(bd[j]) for j in range(n)],
        ALPHA,
        LAT,
    )
    assert np.prod(factors) == pytest.approx(direct, rel=1e-10)


def test_superdeterminant_rejects_bad_input():
    n = LAT.n_sites
    good = [np.eye(2, dtype=complex)] * n
    with pytest.raises(ValueError, match="singular"):
        superdeterminant([np.zeros((2, 2))] * n, good, ALPHA, LAT)
    with pytest.raises(ValueError, match="pairs"):
        superdeterminant(good[:1], good, ALPHA, LAT)


@pytest.mark.parametrize(
    "label",
    [
        SaddlePointLabel("mixed", (0, 0)),
        SaddlePointLabel("mixed", (0, 1)),
        SaddlePointLabel("plus"),
        SaddlePointLabel("minus"),
    ],
)
def test_first_derivatives_vanish_at_labels(label):
    k = spectral_constants(0.0, eps=0.5, alpha=ALPHA, lattice=LAT)
    assert saddle_derivative_check(label, k, ALPHA, h=1e-4) <= 1e-6


def test_derivative_residual_scales_quadratically():
    k = spectral_constants(0.0, eps=0.5, alpha=ALPHA, lattice=LAT)
    label = SaddlePointLabel("plus")
    r1 = saddle_derivative_check(label, k, ALPHA, h=1e-4)
    r2 = saddle_derivative_check(label, k, ALPHA, h=5e-5)
    assert r1 > 1e-12  # above rounding noise, so the ratio is meaningful
    assert 3.5 <= r1 / r2 <= 4.5


def test_derivative_check_validates_step():
    with pytest.raises(ValueError, match="step"):
        saddle_derivative_check(SaddlePointLabel("plus"), K, ALPHA, h=1e-2)


# ---------------------------------------------------------------------------
# coset averages


def _saddle_columns(k, n):
    return np.array([[k.root_plus, k.root_minus]] * n)


def test_compact_average_saddle_display():
    for lam in (0.0, 0.7):
        k = spectral_constants(lam, eps=0.5, xi1=0.3, xi2=-0.4, n_sites=2)
        theta = k.half_separation
        e = cmath.exp(lam * (k.xi1 + k.xi2) / (2.0 * k.density))
        p = cmath.exp(1j * k.root_gap * theta)
        m = cmath.exp(-1j * k.root_gap * theta)
        fu = compact_coset_average(_saddle_columns(k, 2), k)
        assert fu == pytest.approx(
            e * (p - m) / (2j * k.root_gap * theta), rel=1e-12
        )
        fb = noncompact_coset_average(_saddle_columns(k, 2), k)
        assert fb == pytest.approx(
            m / (e * 2j * k.root_gap * theta), rel=1e-12
        )


def test_offset_responses_saddle_display():
    k = spectral_constants(0.7, eps=0.5, xi1=0.3, xi2=-0.4, n_sites=2)
    theta = k.half_separation
    p = cmath.exp(1j * k.root_gap * theta)
    m = cmath.exp(-1j * k.root_gap * theta)
    ru = compact_offset_response(_saddle_columns(k, 2), k)
    assert ru == pytest.approx(
        1.0 / (2.0 * k.density * theta)
        - 1j * (k.root_plus * p - k.root_minus * m) / (k.density * (p - m)),
        rel=1e-12,
    )
    rb = noncompact_offset_response(_saddle_columns(k, 2), k)
    assert rb == pytest.approx(
        1j * k.root_minus / k.density - 1.0 / (2.0 * k.density * theta),
        rel=1e-12,
    )


def test_compact_average_matches_quadrature():
    k = spectral_constants(0.7, eps=0.5, xi1=0.3, xi2=-0.4, n_sites=1)
    qd = np.diag(k.drive)
    pts = [
        np.array([[cmath.exp(0.4j), cmath.exp(-2.1j)]]),
        np.array([[cmath.exp(2.9j), cmath.exp(2.9j)]]),  # degenerate columns
        np.array([[cmath.exp(-1.3j), cmath.exp(0.2j)]]),
    ]
    for us in pts:
        closed = compact_coset_average(us, k)

        def f(el):
            u = el.matrix()
            return np.exp(-np.trace(np.diag(us[0]) @ u.conj().T @ qd @ u))

        assert abs(quad_u2(f) - closed) <= 1e-6 * max(1.0, abs(closed))


def test_noncompact_average_matches_quadrature():
    k = spectral_constants(0.7, eps=0.5, xi1=0.3, xi2=-0.4, n_sites=1)
    ep = cmath.exp(1j * k.root_angle)
    pts = [
        np.array([[1.2 * ep, -0.6 / ep]]),
        np.array([[0.8 * ep, -1.3 / ep]]),
    ]
    for bs in pts:
        closed = noncompact_coset_average(bs, k)

        def f(el):
            tm = el.matrix()
            ti = np.array([[tm[1, 1], -tm[0, 1]], [-tm[1, 0], tm[0, 0]]])
            mm = ti @ np.diag(k.drive) @ tm
            return np.exp(bs[0, 0] * mm[0, 0] + bs[0, 1] * mm[1, 1])

        assert abs(quad_u11(f) - closed) <= 1e-6 * abs(closed)


def test_responses_are_offset_log_derivatives():
    base = dict(eps=0.5, xi1=0.3, xi2=-0.4, n_sites=3)
    k = spectral_constants(0.7, **base)
    rng = np.random.default_rng(5)
    us = np.exp(1j * rng.uniform(-math.pi, math.pi, (3, 2)))
    h = 1e-6
    kp = spectral_constants(0.7, eps=0.5, xi1=0.3 + h, xi2=-0.4, n_sites=3)
    km = spectral_constants(0.7, eps=0.5, xi1=0.3 - h, xi2=-0.4, n_sites=3)
    fd = (
        cmath.log(compact_coset_average(us, kp))
        - cmath.log(compact_coset_average(us, km))
    ) / (2 * h)
    assert abs(compact_offset_response(us, k) - fd) <= 1e-6

    ep = cmath.exp(1j * k.root_angle)
    bs = np.array(
        [[1.3 * ep, -0.7 / ep], [0.8 * ep, -1.4 / ep], [1.1 * ep, -0.9 / ep]]
    )
    kp2 = spectral_constants(0.7, eps=0.5, xi1=0.3, xi2=-0.4 + h, n_sites=3)
    km2 = spectral_constants(0.7, eps=0.5, xi1=0.3, xi2=-0.4 - h, n_sites=3)
    fd2 = (
        cmath.log(noncompact_coset_average(bs, kp2))
        - cmath.log(noncompact_coset_average(bs, km2))
    ) / (2 * h)
    assert abs(noncompact_offset_response(bs, k) - fd2) <= 1e-6


def test_average_input_validation():
    with pytest.raises(ValueError, match="shape"):
        compact_coset_average(np.ones(3), K)
    with pytest.raises(ValueError, match="shape"):
        noncompact_coset_average(np.ones((2, 3)), K)
    k0 = spectral_constants(0.7, eps=0.0, xi1=0.3, xi2=0.3, n_sites=1)
    us = _saddle_columns(k0, 1)
    with pytest.raises(ValueError, match="separation"):
        compact_offset_response(us, k0)
    with pytest.raises(ValueError, match="separation"):
        noncompact_offset_response(us, k0)


# ---------------------------------------------------------------------------
# expansion coefficients


def test_noncompact_tilt_example():
    lat = build_lattice(1, 2)
    k = spectral_constants(0.0, eps=0.5, xi1=0.3, xi2=-0.4, n_sites=2)
    co = saddle_expansion_coefficients(k, ALPHA, lat)
    assert co.noncompact_second == pytest.approx(-1j * math.pi / 2.0, rel=1e-14)


@pytest.mark.parametrize("lam", [0.0, 0.5])
def test_tilt_coefficients_match_finite_differences(lam):
    lat1 = build_lattice(1, 1)
    k = spectral_constants(lam, eps=0.5, xi1=0.3, xi2=-0.4, n_sites=1)
    co = saddle_expansion_coefficients(k, ALPHA, lat1)
    base = _saddle_columns(k, 1)
    h = 1e-4

    def tilt(col, phase):
        out = base.copy()
        out[0, col] *= cmath.exp(1j * phase)
        return out

    c1_fd = (
        compact_offset_response(tilt(0, h), k)
        - compact_offset_response(tilt(0, -h), k)
    ) / (2 * h)
    c2_fd = (
        compact_offset_response(tilt(1, h), k)
        - compact_offset_response(tilt(1, -h), k)
    ) / (2 * h)
    assert abs(co.compact_first - c1_fd) <= 1e-5 * abs(c1_fd)
    assert abs(co.compact_second - c2_fd) <= 1e-5 * abs(c2_fd)

    def stretch(s):
        out = base.copy()
        out[0, 1] *= 1.0 + s
        return out

    d2_fd = (
        noncompact_offset_response(stretch(h), k)
        - noncompact_offset_response(stretch(-h), k)
    ) / (2 * h)
    assert abs(co.noncompact_second - d2_fd) <= 1e-5 * abs(d2_fd)


@pytest.mark.parametrize("lam", [0.0, 0.5])
def test_superdet_mixed_coefficient_matches_finite_differences(lam):
    k = spectral_constants(lam, eps=0.5, xi1=0.3, xi2=-0.4, alpha=ALPHA, lattice=LAT)
    n = LAT.n_sites
    co = saddle_expansion_coefficients(k, ALPHA, LAT)
    us0, bs0 = label_matrices(SaddlePointLabel("mixed", (0,) * n), k, n)
    h = 1e-3

    def dval(su, sb):
        us = [m.copy() for m in us0]
        bs = [m.copy() for m in bs0]
        us[0] = np.diag([k.root_plus, k.root_minus * cmath.exp(1j * su)])
        bs[0] = np.diag([k.root_plus, k.root_minus * (1.0 + sb)])
        return superdeterminant(us, bs, ALPHA, LAT)

    fd = (dval(h, h) - dval(h, -h) - dval(-h, h) + dval(-h, -h)) / (4 * h * h)
    assert abs(co.superdet_mixed - fd) <= 1e-4 * abs(co.superdet_mixed)
    # same coefficient when the tilts sit on different sites
    def dval2(su, sb):
        us = [m.copy() for m in us0]
        bs = [m.copy() for m in bs0]
        us[0] = np.diag([k.root_plus, k.root_minus * cmath.exp(1j * su)])
        bs[1] = np.diag([k.root_plus, k.root_minus * (1.0 + sb)])
        return superdeterminant(us, bs, ALPHA, LAT)

    fd2 = (dval2(h, h) - dval2(h, -h) - dval2(-h, h) + dval2(-h, -h)) / (4 * h * h)
    assert abs(co.superdet_mixed - fd2) <= 1e-4 * abs(co.superdet_mixed)


def test_expansion_coefficients_reject_zero_separation():
    k0 = spectral_constants(0.3, eps=0.0, xi1=0.1, xi2=0.1, n_sites=2)
    with pytest.raises(ValueError, match="separation"):
        saddle_expansion_coefficients(k0, ALPHA, LAT)


# ---------------------------------------------------------------------------
# closure identity


def test_closure_constant_is_one():
    rng = np.random.default_rng(314)
    for lam in rng.uniform(-1.414, 1.414, 100):
        assert closure_constant(float(lam)) == pytest.approx(1.0, abs=1e-12)


def test_closure_identity_half_spacing():
    got = closure_identity(0.25, -0.25, 0.0, 1e-8)
    assert got == pytest.approx(1.0 - 4.0 / math.pi**2, abs=1e-10)


def test_closure_identity_coincident_probes():
    assert abs(closure_identity(0.3, 0.3, 0.7, 1e-8)) < 1e-12
    assert abs(closure_identity(0.3, 0.3, 0.7, 0.0)) < 1e-15


def test_closure_identity_matches_sinc_prediction():
    rng = np.random.default_rng(2718)
    for _ in range(20):
        lam = float(rng.uniform(-1.3, 1.3))
        dxi = float(rng.uniform(-3.0, 3.0))
        got = closure_identity(0.1, 0.1 + dxi, lam, 1e-8)
        x = math.pi * dxi
        sinc = 1.0 if x == 0 else math.sin(x) / x
        assert got == pytest.approx(1.0 - sinc * sinc, abs=1e-8)


def test_closure_identity_validates_inputs():
    with pytest.raises(ValueError, match="sqrt"):
        closure_identity(0.1, 0.2, 1.5, 1e-8)
    with pytest.raises(ValueError, match="eps"):
        closure_identity(0.1, 0.2, 0.0, -1e-8)
