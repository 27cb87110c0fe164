import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_lattice_sample
from latticeshift import (AtomSample, CapacityError, DensityProfile, DomainError, LatticeGeometry, RamseyParams,
                          build_six_beam_lattice, enumerate_sites, f_and_g, mean_shift_imperfect, pair_count,
                          pair_energy, pair_histogram, sample_occupancy, shift_brute, shift_restructured_perfect,
                          shift_restructured_sample, variance_diffuse, variance_full)
from latticeshift.lattice import make_rng


def six_beam(theta_over_pi, n, P=1.0):
    g = build_six_beam_lattice(theta_over_pi * math.pi)
    return g, DensityProfile.for_geometry(g, n, P)


def full_sample(g, p):
    return AtomSample.from_sites(enumerate_sites(g, p))


def dense_energy(positions):
    d = positions[:, None, :] - positions[None, :, :]
    np.einsum("iik->ik", d)[:] = (1.0, 0.0, 0.0)
    u = pair_energy(d)
    np.fill_diagonal(u, 0.0)
    return u


# ---------------------------------------------------------------- direct sum

def test_single_atom_has_no_shift():
    r = shift_brute(AtomSample(np.zeros((1, 3))), RamseyParams(0.3, 0.05))
    assert r.zeroth == 0.0 and r.first == 0.0 and r.total == 0.0


def test_empty_and_coincident_samples_rejected():
    with pytest.raises(DomainError):
        shift_brute(AtomSample(np.zeros((0, 3))), RamseyParams(0.1))
    with pytest.raises(DomainError):
        shift_brute(AtomSample(np.zeros((2, 3))), RamseyParams(0.1))


def test_two_atoms_zeroth_order():
    s = AtomSample(np.array([[0, 0, 0], [0, 0, math.pi]], float))
    r = shift_brute(s, RamseyParams(pulse_error=0.1))
    # (1/2) * 2 * U * eps / 2 with U = g = 3/pi^3; the master-equation oracle agrees
    assert r.zeroth == pytest.approx(0.1 * 3 / math.pi**3 / 2, rel=1e-13)
    assert r.zeroth == pytest.approx(0.00483773, abs=1e-8)
    assert r.first == 0.0


def test_two_atoms_first_order():
    # no third atom, so the cooperative factor is 1 and delta = (t/4) g
    s = AtomSample(np.array([[0, 0, 0], [0, 0, math.pi]], float))
    r = shift_brute(s, RamseyParams(pulse_error=0.0, interrogation=0.01))
    assert r.zeroth == 0.0
    assert r.first == pytest.approx(0.01 / 4 * 3 / math.pi**3, rel=1e-13)


def test_three_atom_exclusion_by_hand():
    pos = np.array([[0, 0, 0], [1.3, 0.2, 0.4], [-0.5, 2.0, 1.1]])
    t = 0.02
    n = 3
    want = 0.0
    for a, b in itertools.permutations(range(n), 2):
        u = float(pair_energy(pos[a] - pos[b]))
        coop = 1.0
        for j in range(n):
            if j not in (a, b):
                f, g = f_and_g(pos[a] - pos[j])
                dx = pos[a, 0] - pos[j, 0]
                coop += 0.5 * (f * math.cos(dx) + g * math.sin(dx))
        want += u * t / 4 * coop
    r = shift_brute(AtomSample(pos), RamseyParams(0.0, t))
    assert r.first == pytest.approx(want / n, rel=1e-13)


def test_total_is_sum_and_provenance():
    s = random_lattice_sample(12, seed=4)
    r = shift_brute(s, RamseyParams(0.2, 0.03))
    assert r.total == r.zeroth + r.first
    assert r.method == "brute" and r.n_atoms == 12


def test_validity_flags():
    s = random_lattice_sample(6, seed=1)
    assert shift_brute(s, RamseyParams(0.1, 0.01)).flags == ()
    assert "interrogation_outside_perturbative_regime" in shift_brute(s, RamseyParams(0.1, 0.5)).flags


def test_brute_guard():
    s = random_lattice_sample(20, seed=2)
    with pytest.raises(CapacityError):
        shift_brute(s, RamseyParams(0.1), max_atoms=10)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 30), st.integers(0, 10_000), st.tuples(*[st.floats(-50, 50)] * 3))
def test_translation_invariance(n, seed, shift):
    s = random_lattice_sample(n, seed=seed)
    p = RamseyParams(0.15, 0.02)
    a = shift_brute(s, p)
    b = shift_brute(AtomSample(s.positions + np.array(shift)), p)
    scale = abs(a.zeroth) + abs(a.first) + 1e-300
    assert abs(a.zeroth - b.zeroth) <= 1e-10 * scale
    assert abs(a.first - b.first) <= 1e-10 * scale


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 40), st.integers(0, 10_000))
def test_sine_part_cancels_in_pair_sum(n, seed):
    pos = random_lattice_sample(n, seed=seed).positions
    d = pos[:, None, :] - pos[None, :, :]
    np.einsum("iik->ik", d)[:] = (1.0, 0.0, 0.0)
    f, _ = f_and_g(d)
    np.fill_diagonal(f, 0.0)
    terms = f * np.sin(d[..., 0])
    assert abs(math.fsum(terms.ravel())) <= 1e-9 * np.abs(f).sum()


def test_permutation_gives_identical_bits():
    s = random_lattice_sample(40, seed=9)
    perm = np.random.default_rng(3).permutation(40)
    p = RamseyParams(0.1, 0.02)
    a = shift_brute(s, p)
    b = shift_brute(AtomSample(s.positions[perm]), p)
    assert (a.zeroth, a.first) == (b.zeroth, b.first)


def test_linearity():
    s = random_lattice_sample(25, seed=5)
    a = shift_brute(s, RamseyParams(0.1, 0.01))
    b = shift_brute(s, RamseyParams(0.2, 0.02))
    c = shift_brute(s, RamseyParams(0.3, 0.03))
    assert b.zeroth == 2 * a.zeroth and b.first == 2 * a.first
    assert c.zeroth == pytest.approx(3 * a.zeroth, rel=1e-15)
    assert c.first == pytest.approx(3 * a.first, rel=1e-15)


# ------------------------------------------------------------ lattice sums

def test_restructured_matches_brute_thousand_atoms():
    g, p = six_beam(0.15, 1e3)
    a = shift_restructured_perfect(g, p, 0.1)
    b = shift_brute(full_sample(g, p), RamseyParams(0.1))
    assert a.n_atoms == b.n_atoms
    assert a.zeroth == pytest.approx(b.zeroth, rel=1e-10)
    assert a.first == 0.0 and "zeroth_order_only" in a.flags


@pytest.mark.parametrize("seed", range(5))
def test_restructured_matches_brute_random_angles(seed):
    rng = np.random.default_rng(seed)
    th = rng.uniform(0.05, 0.45)
    n = rng.uniform(50, 1000)
    g, p = six_beam(th, n)
    a = shift_restructured_perfect(g, p, 1.0).zeroth
    b = shift_brute(full_sample(g, p), RamseyParams(1.0)).zeroth
    assert a == pytest.approx(b, rel=1e-10)


def test_restructured_zero_for_perfect_pulse():
    g, p = six_beam(0.15, 500)
    assert shift_restructured_perfect(g, p, 0.0).zeroth == 0.0


def test_restructured_needs_full_filling():
    g, p = six_beam(0.15, 500, 0.5)
    with pytest.raises(DomainError):
        shift_restructured_perfect(g, p, 0.1)


def test_sample_fft_sum_matches_brute():
    g, p = six_beam(0.2, 2000, 0.4)
    s = sample_occupancy(enumerate_sites(g, p), 0.4, seed=17)
    a = shift_restructured_sample(s, 0.3).zeroth
    b = shift_brute(s, RamseyParams(0.3)).zeroth
    assert a == pytest.approx(b, rel=1e-10)


@pytest.mark.xfail(strict=True, reason="at theta/pi = 0.180 the line is on the dispersive flank; see ledger")
def test_resonance_at_0180_exceeds_off_resonant_tenfold():
    g1, p1 = six_beam(0.180, 1e5)
    g2, p2 = six_beam(0.15, 1e5)
    a = abs(shift_restructured_perfect(g1, p1, 1.0).zeroth)
    b = abs(shift_restructured_perfect(g2, p2, 1.0).zeroth)
    assert a >= 10 * b


def test_resonant_peak_exceeds_off_resonant_tenfold():
    th0 = math.asin(1.07 / 2) / math.pi
    g2, p2 = six_beam(0.15, 1e5)
    off = abs(shift_restructured_perfect(g2, p2, 1.0).zeroth)
    peak = max(abs(shift_restructured_perfect(*six_beam(t, 1e5), 1.0).zeroth)
               for t in np.linspace(th0 - 0.005, th0 + 0.005, 41))
    assert peak >= 10 * off


# ------------------------------------------------------------ pair counts

def brute_pair_count(idx, R):
    s = {tuple(r) for r in idx.tolist()}
    return sum((r[0] + R[0], r[1] + R[1], r[2] + R[2]) in s for r in s)


def test_pair_count_cubic_step(cubic):
    p = DensityProfile.from_radius(3.0, 1.0)
    idx = enumerate_sites(cubic, p).indices
    for R in [(1, 0, 0), (0, 1, 0), (2, -1, 3), (5, 0, 0), (0, 0, -6)]:
        assert pair_count(cubic, p, R) == brute_pair_count(idx, R)


def test_pair_count_edge_cases(cubic):
    p = DensityProfile.from_radius(3.0, 1.0)
    assert pair_count(cubic, p, (6, 0, 0)) == 0
    assert pair_count(cubic, p, (7, 3, 1)) == 0
    single = DensityProfile.from_radius(0.4, 1.0)
    assert pair_count(cubic, single, (1, 0, 0)) == 0
    with pytest.raises(DomainError):
        pair_count(cubic, p, (0, 0, 0))


def test_histogram_matches_pair_count_and_totals():
    g, p = six_beam(0.23, 1500)
    h = pair_histogram(g, p)
    n = h.n_sites
    assert h.total_pairs() == n * (n - 1)
    rng = np.random.default_rng(1)
    for _ in range(30):
        R = tuple(int(x) for x in rng.integers(-6, 7, size=3))
        if R == (0, 0, 0):
            continue
        assert h.count(R) == pair_count(g, p, R)
        assert h.count(R) == h.count(tuple(-x for x in R))


def test_histogram_matches_brute_for_small_sphere():
    g = LatticeGeometry.from_constants(1.3, 0.9, 2.1)
    p = DensityProfile.from_radius(5.0, g.cell_volume)
    idx = enumerate_sites(g, p).indices
    h = pair_histogram(g, p)
    for R in itertools.product(range(-4, 5), range(-5, 6), range(-3, 4)):
        if R != (0, 0, 0):
            assert h.count(R) == brute_pair_count(idx, R)


# ------------------------------------------------------------ imperfect filling

def test_mean_shift_reduces_to_perfect():
    g, p = six_beam(0.17, 3000)
    assert mean_shift_imperfect(g, p, 0.2) == shift_restructured_perfect(g, p, 0.2).zeroth


def test_mean_shift_monte_carlo():
    g, p = six_beam(0.15, 100, 0.5)
    sites = enumerate_sites(g, p)
    vals = np.array([shift_brute(sample_occupancy(sites, 0.5, s), RamseyParams(1.0)).zeroth for s in range(200)])
    se = vals.std(ddof=1) / math.sqrt(len(vals))
    assert abs(vals.mean() - mean_shift_imperfect(g, p, 1.0)) <= 3 * se


def test_overlap_fast_path_is_close():
    g, p = six_beam(0.15, 1e4, 0.05)
    a = mean_shift_imperfect(g, p, 1.0)
    b = mean_shift_imperfect(g, p, 1.0, method="overlap")
    assert b == pytest.approx(a, rel=0.01)


def test_variance_zero_at_full_filling():
    g, p = six_beam(0.15, 500)
    assert variance_full(g, p, 0.1) == 0.0


def test_variance_full_matches_dense_formula():
    g, p = six_beam(0.21, 150, 0.3)
    pos = enumerate_sites(g, p).positions
    u = dense_energy(pos)
    us = 0.5 * (u + u.T)
    P, M = 0.3, len(pos)
    s2 = (us * us).sum()
    w = us.sum(axis=1)
    var_x = 2 * P**2 * (1 - P**2) * s2 + 4 * P**3 * (1 - P) * ((w * w).sum() - s2)
    assert variance_full(g, p, 1.0) == pytest.approx(var_x * (0.5 / (P * M)) ** 2, rel=1e-10)


def test_variance_full_monte_carlo():
    # estimand: (eps / 2<N>) X with X = sum_{a != b} U_ab n_a n_b
    g, p = six_beam(0.15, 60, 0.3)
    sites = enumerate_sites(g, p)
    M = len(sites)
    assert M <= 200
    u = dense_energy(sites.positions)
    occ = (make_rng(2024).random((10_000, M)) < 0.3).astype(float)
    x = np.einsum("si,ij,sj->s", occ, u, occ)
    check = sample_occupancy(sites, 0.3, seed=5)
    n5 = (make_rng(5).random(M) < 0.3).astype(float)
    assert shift_brute(check, RamseyParams(1.0)).zeroth == pytest.approx(0.5 * n5 @ u @ n5 / n5.sum(), rel=1e-12)
    mc = np.var(0.5 * x / (0.3 * M), ddof=1)
    assert variance_full(g, p, 1.0) == pytest.approx(mc, rel=0.05)


def test_variance_full_guard():
    g, p = six_beam(0.15, 1e4, 0.05)
    with pytest.raises(CapacityError):
        variance_full(g, p, 1.0, max_sites=1000)


def test_diffuse_close_to_full_for_sparse_filling():
    g, p = six_beam(0.15, 1e3, 0.05)
    assert variance_diffuse(g, p, 1.0) == pytest.approx(variance_full(g, p, 1.0), rel=0.10)


def test_diffuse_warns_for_dense_filling():
    g, p = six_beam(0.15, 200, 0.5)
    with pytest.warns(UserWarning):
        variance_diffuse(g, p, 1.0)


def test_diffuse_variance_scaling_laws():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        s = lambda n, P: math.sqrt(variance_diffuse(*six_beam(0.125, n, P), 1.0))  # noqa: E731
        assert s(1e4, 0.05) / s(4e4, 0.05) == pytest.approx(4 ** (1 / 3), rel=0.10)
        assert s(1e4, 0.1) / s(1e4, 0.05) == pytest.approx(2 ** (1 / 3), rel=0.10)
