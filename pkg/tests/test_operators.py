import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from betascope import (BumpFamily, KernelValidationError, WeightedPointMeasure,
                       build_corona, build_lattice, cantor4, cauchy_kernel,
                       k_r_chain, k_r_telescoped, lipschitz_graph, m_r_phi,
                       m_tilde, make_kernel, riesz_kernel, segment,
                       suppressed_kernel, suppression_factor, t_eps,
                       t_phi_eps, t_phi_star, t_star, truncated_field,
                       validate_kernel)


class TestKernels:
    def test_riesz_pointwise_values(self):
        k = riesz_kernel(1, 2)
        out = k(np.array([[1.0, 0.0], [0.0, 2.0]]))
        assert np.allclose(out[0], [1.0, 0.0])
        assert np.allclose(out[1], [0.0, 0.5])          # z/|z|^2 at (0,2)

    def test_cauchy_matches_complex_inverse(self):
        k = cauchy_kernel()
        z = np.array([[0.3, -0.7], [1.0, 1.0]])
        out = k(z)
        for row, (x, y) in zip(out, z):
            w = 1.0 / complex(x, y)
            # vector form of the Cauchy kernel: (Re, Im) mirrored so that
            # |k| = 1/|z| and the energy matches the complex transform
            assert np.hypot(*row) == pytest.approx(abs(w), rel=1e-14)

    def test_riesz_antisymmetry_bitwise(self):
        k = riesz_kernel(1, 2)
        z = np.random.default_rng(0).normal(size=(50, 2))
        assert np.array_equal(k(-z), -k(z))

    def test_constants_certified(self):
        # validator reports worst observed/claimed ratio per bound; the
        # stated constants are exact, so every ratio stays near one
        for n, d in [(1, 2), (2, 3), (1, 3)]:
            rep = validate_kernel(riesz_kernel(n, d))
            assert rep["oddness"][0] == 0.0
            for key in ("size", "gradient", "hessian"):
                assert rep[key][0] <= 1.0 + 1e-5, (n, d, key, rep[key])

    def test_bad_constants_caught(self):
        fn = riesz_kernel(1, 2).fn
        with pytest.raises(KernelValidationError):
            make_kernel("custom", n=1, d=2, fn=fn,
                        constants=(0.01, 0.01, 0.01))

    def test_make_kernel_named(self):
        k = make_kernel("riesz", n=2, d=3)
        assert k.n == 2 and k.dim == 3


class TestBumpFamily:
    def test_partition_of_unity_exact(self):
        fam = BumpFamily(20.0)
        # partial sums of phi_k telescope to psi differences; on the
        # plateau the sum is exactly 1.0 in floating point
        t = np.geomspace(1e-6, 10.0, 4001)
        total = np.zeros_like(t)
        for k in range(-2, 40):
            total += fam.phi_k(k, t)
        plateau = (t > fam.OUTER * 20.0 ** -37) & (t < fam.INNER * 400.0)
        assert np.all(total[plateau] == 1.0)

    def test_psi_monotone_smoothstep(self):
        fam = BumpFamily(12.0)
        t = np.linspace(0.0, 0.02, 500)
        v = fam.psi(t)
        assert (np.diff(v) <= 1e-15).all()
        assert v[0] == 1.0 and v[-1] == 0.0

    def test_support_brackets(self):
        fam = BumpFamily(15.0)
        lo, hi = fam.support_k(3)
        t = np.geomspace(lo * 0.5, hi * 2.0, 1000)
        vals = fam.phi_k(3, t)
        assert vals[t < lo * (1.0 - 1e-9)].max(initial=0.0) == 0.0
        assert vals[t > hi * (1.0 + 1e-9)].max(initial=0.0) == 0.0

    @settings(max_examples=50, deadline=None)
    @given(st.floats(1e-8, 1e2), st.integers(-5, 30))
    def test_phi_k_in_unit_interval(self, t, k):
        fam = BumpFamily(10.0)
        v = float(fam.phi_k(k, np.array([t]))[0])
        assert -1e-15 <= v <= 1.0 + 1e-15


class TestTruncation:
    def test_t_eps_brute_force(self):
        m = segment(60)
        k = riesz_kernel(1, 2)
        x = np.array([0.37, 0.02])
        eps = 0.1
        d = np.linalg.norm(m.points - x, axis=1)
        keep = d > eps
        brute = (k(x - m.points[keep]) * m.weights[keep, None]).sum(axis=0)
        assert np.allclose(t_eps(k, m, x, eps), brute, rtol=1e-13)

    def test_t_eps_excludes_center_atom(self):
        m = segment(10)
        x = m.points[4]
        val = t_eps(riesz_kernel(1, 2), m, x, 1e-9)
        assert np.isfinite(val).all()

    def test_t_star_matches_grid_sup(self):
        m = segment(80)
        k = riesz_kernel(1, 2)
        x = np.array([0.51, 0.0])
        sup, arg = t_star(k, m, x)
        d = np.unique(np.linalg.norm(m.points - x, axis=1))
        grid = np.concatenate([d[d > 0] * 0.999, d[d > 0] * 1.001,
                               [1e-9, m.diameter * 2]])
        brute = max(np.linalg.norm(t_eps(k, m, x, e)) for e in grid)
        assert sup >= brute - 1e-12
        assert np.linalg.norm(t_eps(k, m, x, arg)) == pytest.approx(
            sup, rel=1e-12)

    def test_truncated_field_matches_loop(self):
        m = segment(40)
        k = riesz_kernel(1, 2)
        centers = m.points[::5]
        eps = np.full(len(centers), 0.07)
        field = truncated_field(k, m, centers, eps)
        for row, c in zip(field, centers):
            assert np.allclose(row, t_eps(k, m, c, 0.07), rtol=1e-13)

    def test_monotone_tail_large_eps_zero(self):
        m = segment(15)
        out = t_eps(riesz_kernel(1, 2), m, m.points[0], 100.0)
        assert np.array_equal(out, np.zeros(2))


class TestSuppression:
    def test_factor_range_and_identity(self):
        k = riesz_kernel(1, 2)
        rng = np.random.default_rng(2)
        diffs = rng.normal(size=(200, 2))
        fac = suppression_factor(k, diffs, 0.3, rng.uniform(0.0, 0.5, 200))
        assert ((fac > 0.0) & (fac <= 1.0)).all()
        fac0 = suppression_factor(k, diffs, 0.0, np.zeros(200))
        assert np.array_equal(fac0, np.ones(200))

    def test_pairwise_wrapper(self):
        k = riesz_kernel(1, 2)
        x = np.array([0.2, 0.8])
        y = np.array([-0.4, 0.1])
        plain = k((x - y)[None, :])[0]
        assert np.array_equal(suppressed_kernel(k, x, y, 0.0, 0.7), plain)
        damped = suppressed_kernel(k, x, y, 0.5, 0.7)
        assert np.linalg.norm(damped) < np.linalg.norm(plain)

    def test_antisymmetry_exact(self):
        k = riesz_kernel(1, 2)
        rng = np.random.default_rng(3)
        for _ in range(100):
            x, y = rng.normal(size=(2, 2))
            a = suppressed_kernel(k, x, y, 0.2, 0.4)
            b = suppressed_kernel(k, y, x, 0.4, 0.2)
            assert np.array_equal(a, -b)

    def test_size_bound_property(self):
        # |k_Phi(x,y)| <= c / max(Phi(x), Phi(y))^n for 1-Lipschitz Phi.
        # (For independent radii the bound genuinely fails; the Lipschitz
        # coupling Phi(y) >= Phi(x) - |x - y| is what saves it.)
        k = riesz_kernel(1, 2)
        rng = np.random.default_rng(4)
        marker = np.array([0.1, -0.2])
        worst = 0.0
        for _ in range(2000):
            x, y = rng.normal(size=(2, 2))
            px = float(np.linalg.norm(x - marker))
            py = float(np.linalg.norm(y - marker))
            if max(px, py) == 0.0:
                continue
            val = np.linalg.norm(suppressed_kernel(k, x, y, px, py))
            worst = max(worst, val * max(px, py))
        assert worst <= 2.0 * k.constants[0] + 1e-9


class TestSuppressedTruncation:
    def test_t_phi_eps_reduces_to_t_eps(self):
        m = segment(50)
        k = riesz_kernel(1, 2)
        x = np.array([0.4, 0.01])
        phi_atoms = np.zeros(m.size)
        a = t_phi_eps(k, m, x, 0.08, 0.0, phi_atoms)
        b = t_eps(k, m, x, 0.08)
        assert np.array_equal(a, b)

    def test_t_phi_star_bounded_by_unsuppressed_lowtrunc(self):
        m = segment(50)
        k = riesz_kernel(1, 2)
        x = np.array([0.4, 0.01])
        phi_atoms = np.full(m.size, 0.05)
        sup, _ = t_phi_star(k, m, x, 0.05, phi_atoms)
        assert np.isfinite(sup) and sup >= 0.0


class TestMaximalFunctions:
    def test_m_r_phi_floor(self):
        m = segment(30)
        x = m.points[3]
        # zero suppression radius floors at r_min
        base = m.sup_density(x, m.r_min)
        assert m_r_phi(m, x, 0.0) == pytest.approx(base)

    def test_m_r_phi_reweighted(self):
        m = segment(30)
        f = np.linspace(-1.0, 1.0, 30)
        x = m.points[10]
        assert m_r_phi(m, x, 0.02, f=f) == pytest.approx(
            m.sup_density(x, max(0.02, m.r_min), f=f))

    def test_m_tilde_variants(self):
        m = segment(30)
        f = np.ones(30)
        x = m.points[4]
        plain = m_tilde(m, f, x)
        three_half = m_tilde(m, f, x, variant="3/2")
        assert plain > 0.0 and three_half > 0.0
        with pytest.raises(ValueError):
            m_tilde(m, f, x, variant="bogus")

    def test_m_tilde_constant_function_bounded_by_one(self):
        # averaging |f| = 1 against a probability-normalized window stays
        # near 1; the denominator at 3r only shrinks it
        m = segment(50)
        f = np.ones(50)
        for i in (0, 12, 49):
            assert m_tilde(m, f, m.points[i]) <= 1.0 + 1e-12


@pytest.fixture(scope="module")
def chain_corona():
    lat = build_lattice(cantor4(4), a0=4.0, c0=400.0)
    return build_corona(lat, a_stop=30.0, tau=0.005)


class TestKernelChain:

    def test_chain_equals_telescoped(self, chain_corona):
        corona = chain_corona
        k = riesz_kernel(1, 2)
        bump = BumpFamily(corona.lattice.a0)
        rng = np.random.default_rng(0)
        tops = [t for t in corona.tops
                if corona.lattice.cell(t).level < corona.lattice.max_depth]
        for _ in range(50):
            top = int(rng.choice(tops))
            atoms = corona.lattice.cell(top).point_indices
            atom = int(rng.choice(atoms))
            a = k_r_chain(corona, k, bump, top, atom)
            b = k_r_telescoped(corona, k, bump, top, atom)
            assert np.allclose(a, b, rtol=1e-12, atol=1e-15)

    def test_atom_outside_tree_rejected(self, chain_corona):
        corona = chain_corona
        k = riesz_kernel(1, 2)
        bump = BumpFamily(corona.lattice.a0)
        tops = corona.tops
        lat = corona.lattice
        # find a top and an atom not below it
        for top in tops[1:]:
            atoms = set(lat.cell(top).point_indices)
            outside = [i for i in lat.root.point_indices
                       if i not in atoms]
            if outside:
                with pytest.raises(ValueError):
                    k_r_chain(corona, k, bump, top, outside[0])
                break


@pytest.fixture(scope="module")
def lemma_setup():
    m = lipschitz_graph(300, seed=5)
    k = riesz_kernel(1, 2)
    rng = np.random.default_rng(10)
    # a fixed 1-Lipschitz suppression radius: distance to a marker point
    marker = np.array([0.5, 0.0])
    phi_atoms = np.linalg.norm(m.points - marker, axis=1)
    return m, k, phi_atoms, marker, rng


class TestLemma22Analogues:
    """Truncation-vs-suppression comparisons with empirical constants."""

    def test_large_eps_difference_controlled(self, lemma_setup):
        m, k, phi_atoms, marker, rng = lemma_setup
        worst = 0.0
        for _ in range(300):
            i = int(rng.integers(m.size))
            x = m.points[i]
            phi_x = float(np.linalg.norm(x - marker))
            if phi_x <= m.r_min:
                continue
            eps = phi_x * float(rng.uniform(1.0, 4.0))
            diff = np.linalg.norm(
                t_phi_eps(k, m, x, eps, phi_x, phi_atoms)
                - t_eps(k, m, x, eps))
            denom = m_r_phi(m, x, phi_x)
            if denom > 0:
                worst = max(worst, diff / denom)
        assert np.isfinite(worst)
        assert worst <= 10.0

    def test_small_eps_pins_to_phi_level(self, lemma_setup):
        m, k, phi_atoms, marker, rng = lemma_setup
        worst = 0.0
        for _ in range(300):
            i = int(rng.integers(m.size))
            x = m.points[i]
            phi_x = float(np.linalg.norm(x - marker))
            if phi_x <= m.r_min:
                continue
            eps = phi_x * float(rng.uniform(0.05, 1.0))
            diff = np.linalg.norm(
                t_phi_eps(k, m, x, eps, phi_x, phi_atoms)
                - t_phi_eps(k, m, x, phi_x, phi_x, phi_atoms))
            denom = m_r_phi(m, x, phi_x)
            if denom > 0:
                worst = max(worst, diff / denom)
        assert np.isfinite(worst)
        assert worst <= 10.0
