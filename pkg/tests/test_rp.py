"""Reflection, gauge, ground-state and chessboard tests.

Brute-force reference energies below are written with explicit Python
loops over the kernel matrix accessor, sharing no array plumbing with
the field or Fourier routes they check.
"""

import numpy as np
import pytest

from dipkit.kernel import build_kernel
from dipkit.lattice import LatticeSpec, site_coordinates, stagger_signs
from dipkit.rp import (chessboard_descent, chessboard_step, energy,
                       energy_fourier, energy_staggered_form, ground_state,
                       ground_state_energy, half_box_sites, local_field,
                       random_config, reflect_config, reflect_sites,
                       reflection_planes, row_sum_residual, rp_cross_matrix,
                       to_staggered)


def test_random_config_contract(spec2):
    s1 = random_config(spec2, seed=5)
    s2 = random_config(spec2, seed=5)
    np.testing.assert_array_equal(s1, s2)
    np.testing.assert_allclose(np.linalg.norm(s1, axis=1), 1.0, rtol=1e-14)
    assert s1.shape == (spec2.n_sites, 3)


def test_energy_routes_agree(table2, table4):
    # the scalar-difference gauged form must hold at L = 4 as well: off
    # diagonal kernel entries with odd z_i + z_j only exist there, and a
    # vector-difference form would miss their swap sign
    for table in (table2, table4):
        spec = table.spec
        scale = 0.5 * spec.n_sites
        for seed in (7, 11, 23):
            s = random_config(spec, seed=seed)
            e_field = energy(table, s)
            assert abs(energy_fourier(table, s) - e_field) <= 1e-13 * scale
            assert abs(energy_staggered_form(table, s) - e_field) <= 1e-13 * scale
            assert abs(energy_staggered_form(table, s, chunk=100)
                       - e_field) <= 1e-13 * scale


def test_energy_brute_force(spec2, table2):
    s = random_config(spec2, seed=3)
    coords = site_coordinates(spec2)
    total = 0.0
    for x in range(spec2.n_sites):
        for y in range(spec2.n_sites):
            total += s[x] @ table2.matrix(coords[x] - coords[y]) @ s[y]
    assert energy(table2, s) == pytest.approx(total, rel=1e-12)


def test_local_field_brute_force(spec2, table2):
    s = random_config(spec2, seed=3)
    h = local_field(table2, s)
    coords = site_coordinates(spec2)
    for x in (0, 9, 31, 63):
        want = np.zeros(3)
        for y in range(spec2.n_sites):
            want += table2.matrix(coords[x] - coords[y]) @ s[y]
        np.testing.assert_allclose(h[x], want, rtol=1e-12, atol=1e-15)


def test_row_sums(table2, table4):
    for table in (table2, table4):
        assert row_sum_residual(table) <= table.truncation_error_bound


def test_ground_state_energy_exact(spec2, table2, rng):
    e_min = ground_state_energy(table2)
    tol = 1e-12 * abs(e_min)
    assert abs(energy(table2, ground_state(spec2)) - e_min) <= tol
    for _ in range(20):
        v = rng.standard_normal(3)
        v /= np.linalg.norm(v)
        x0 = rng.integers(-1, 3, size=3)
        g = ground_state(spec2, v=v, x0=x0)
        assert abs(energy(table2, g) - e_min) <= tol
        np.testing.assert_allclose(np.linalg.norm(g, axis=1), 1.0, rtol=1e-14)


def test_ground_state_structure(spec2):
    v = np.array([0.6, 0.0, 0.8])
    x0 = np.array([1, -1, 2])
    g = ground_state(spec2, v=v, x0=x0)
    coords = site_coordinates(spec2)
    k = int(np.nonzero((coords == x0).all(axis=1))[0][0])
    np.testing.assert_array_equal(g[k], v)
    # componentwise sign pattern matches the gauge built from x - x0
    x = coords - x0
    signs = 1.0 - 2.0 * ((x.sum(axis=1)[:, None] + x) % 2)
    np.testing.assert_array_equal(g, signs * v)


def test_ground_state_rejects_non_unit(spec2):
    with pytest.raises(ValueError, match="unit"):
        ground_state(spec2, v=np.array([1.0, 1.0, 0.0]))


def test_energy_bounded_below(spec2, table2):
    e_min = ground_state_energy(table2)
    for seed in range(20):
        assert energy(table2, random_config(spec2, seed=seed)) >= e_min


def test_reflection_planes_enumeration(spec2, spec4):
    for spec in (spec2, spec4):
        planes = reflection_planes(spec)
        assert len(planes) == spec.d * spec.L
        assert len({(p.axis, p.a) for p in planes}) == len(planes)


def test_reflection_involutions(spec2):
    s = random_config(spec2, seed=2)
    ident = np.arange(spec2.n_sites)
    for plane in reflection_planes(spec2):
        perm = reflect_sites(spec2, plane)
        np.testing.assert_array_equal(perm[perm], ident)
        np.testing.assert_array_equal(
            reflect_config(spec2, plane, reflect_config(spec2, plane, s)), s)
    np.testing.assert_array_equal(
        to_staggered(spec2, to_staggered(spec2, s)), s)


def test_reflection_is_plain_in_gauge(spec2, spec4):
    # tau_x theta = tau_(rx) holds for every plane, so the gauged image of
    # a reflected configuration is the bare site permutation, bitwise
    for spec in (spec2, spec4):
        s = random_config(spec, seed=8)
        sig = to_staggered(spec, s)
        for plane in reflection_planes(spec):
            lhs = to_staggered(spec, reflect_config(spec, plane, s))
            rhs = sig[reflect_sites(spec, plane)]
            np.testing.assert_array_equal(lhs, rhs)


def test_half_box_partition(spec2):
    full = np.arange(spec2.n_sites)
    for plane in reflection_planes(spec2):
        half = half_box_sites(spec2, plane)
        assert half.shape[0] == spec2.n_sites // 2
        mirror = reflect_sites(spec2, plane)[half]
        assert np.intersect1d(half, mirror).size == 0
        np.testing.assert_array_equal(np.sort(np.concatenate([half, mirror])),
                                      full)


def test_cross_matrix_symmetric_psd(spec2, table2):
    for plane in reflection_planes(spec2):
        c = rp_cross_matrix(table2, plane)
        nh = spec2.n_sites // 2 * 3
        assert c.shape == (nh, nh)
        np.testing.assert_array_equal(c, c.T)
        scale = float(np.max(np.abs(c)))
        assert float(np.linalg.eigvalsh(c).min()) >= -1e-12 * scale


def test_energy_is_gauged_quadratic_form(spec2, table2):
    # H equals the gauged form sum sigma_x^T W'(x,y) sigma_y with
    # W'_ij = tau^i_x W_ij(x - y) tau^j_y
    s = random_config(spec2, seed=13)
    tau = stagger_signs(spec2)
    sigma = tau * s
    coords = site_coordinates(spec2)
    total = 0.0
    for x in range(spec2.n_sites):
        for y in range(spec2.n_sites):
            w = table2.matrix(coords[x] - coords[y])
            total += sigma[x] @ (np.outer(tau[x], tau[y]) * w) @ sigma[y]
    assert energy(table2, s) == pytest.approx(total, rel=1e-12)


def test_chessboard_step_never_increases(spec2, table2):
    planes = reflection_planes(spec2)
    for seed in range(10):
        s = random_config(spec2, seed=seed)
        for plane in planes:
            best, h_best, h0 = chessboard_step(table2, s, plane)
            scale = abs(h0) + spec2.n_sites
            assert h_best <= h0 + 1e-11 * scale
            assert energy(table2, best) == pytest.approx(h_best, rel=1e-12)


def test_chessboard_descent(spec2, table2):
    e_min = ground_state_energy(table2)
    s = random_config(spec2, seed=7)
    cfg, h, rounds = chessboard_descent(table2, s)
    assert h <= energy(table2, s)
    assert h >= e_min - 1e-11 * abs(e_min)
    # this seed descends all the way to the ground level
    assert h == pytest.approx(e_min, rel=1e-12)
    assert 1 <= rounds <= 8
    # starting at a ground state, the first sweep finds nothing to do
    g = ground_state(spec2, v=np.array([0.0, 1.0, 0.0]))
    cfg, h, rounds = chessboard_descent(table2, g)
    assert rounds == 1
    assert h == pytest.approx(e_min, rel=1e-12)
