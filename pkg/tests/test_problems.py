import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from deepspoc.baselines import baseline_poc
from deepspoc.errors import CapabilityError, InvalidParameterError
from deepspoc.models import MlpDensity, Domain, rectify
from deepspoc.problems import (
    KS_SLOPE,
    PME_C,
    BarenblattParams,
    barenblatt_eval,
    cw_drift,
    cw_invariant_density,
    cw_normalizer,
    cw_problem,
    cw_unnormalized,
    fpme_problem,
    fpme_sigma,
    ks_constant,
    ks_drift,
    ks_grad_W,
    ks_problem,
    pme_ode_drift,
    pme_problem,
    pme_sigma,
    unit_ball_volume,
)
from deepspoc.sde import TimeGrid, simulate_batch

# dense midpoint quadratures, frozen here as oracles
C0_PME_1D = 0.6283185309128019  # m=3, C=sqrt(3)/15, d=1; 10^6 midpoint points on the support
C_CW_BETA1 = 4.165748068946771  # beta=1; 10^6 midpoint points on [-6, 6]


def midpoint(f, lo, hi, n):
    x = lo + (hi - lo) * (np.arange(n) + 0.5) / n
    return float(np.sum(f(x)) * (hi - lo) / n)


class TestBarenblatt:
    p = BarenblattParams(3.0, PME_C, 1)

    def test_exponents(self):
        q = BarenblattParams(3.0, 1.0, 3)
        assert q.alpha == pytest.approx(3 / 8) and q.beta == pytest.approx(1 / 8)

    def test_center_value(self):
        assert self.p(1.0, np.zeros((1, 1)))[0] == pytest.approx(math.sqrt(math.sqrt(3) / 15), rel=1e-14)
        assert math.sqrt(math.sqrt(3) / 15) == pytest.approx(0.339809, abs=5e-7)

    def test_support_edge(self):
        edge = math.sqrt(4 * math.sqrt(3) / 5)
        assert self.p.support_radius(1.0) == pytest.approx(edge, rel=1e-14)
        vals = self.p(1.0, np.array([[edge], [-edge], [edge + 0.1], [5.0]]))
        np.testing.assert_array_equal(vals, 0.0)

    def test_requires_positive_time(self):
        with pytest.raises(InvalidParameterError):
            barenblatt_eval(self.p, 0.0, np.zeros((1, 1)))

    def test_bad_params(self):
        with pytest.raises(InvalidParameterError):
            BarenblattParams(1.0, 1.0, 1)

    def test_c0_against_dense_oracle(self):
        assert self.p.c0 == pytest.approx(C0_PME_1D, rel=1e-8)

    def test_c0_oracle_recomputed(self):
        R = self.p.support_radius(1.0)
        q = midpoint(lambda x: self.p(1.0, x[:, None]), -R, R, 1_000_000)
        assert q == pytest.approx(C0_PME_1D, rel=1e-7)

    def test_nu(self):
        assert self.p.nu == self.p.c0**2
        assert self.p.nu == pytest.approx(C0_PME_1D**2, rel=1e-8)

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_mass_conserved_between_times(self, d):
        p = BarenblattParams(3.0, PME_C, d)
        if d == 1:
            masses = []
            for t in (1.0, 2.0):
                R = p.support_radius(t)
                masses.append(midpoint(lambda x: p(t, x[:, None]), -R, R, 200_000))
        else:
            masses = []
            for t in (0.1, 0.3):
                R = p.support_radius(t)
                n = 400 if d == 2 else 120
                g = -R + 2 * R * (np.arange(n) + 0.5) / n
                mesh = np.stack([m.ravel() for m in np.meshgrid(*([g] * d), indexing="ij")], 1)
                masses.append(float(p(t, mesh).sum() * (2 * R / n) ** d))
        assert masses[0] == pytest.approx(masses[1], rel=1e-5 if d == 1 else 2e-3)
        assert masses[0] == pytest.approx(p.c0, rel=1e-5 if d == 1 else 2e-3)

    def test_normalized_profile_is_fixed_by_rectification(self):
        R = self.p.support_radius(1.5)
        dens, Z = rectify(lambda x: self.p.normalized(1.5, x), Domain.box(R, 1), scan_points=8192)
        assert Z == pytest.approx(1.0, abs=1e-5)


class TestPmeCoefficients:
    def test_sigma_examples(self):
        assert pme_sigma(0.0, 3.0, 1.0) == 0.0
        assert pme_sigma(0.5, 3.0, 1.0) == pytest.approx(math.sqrt(2) * 0.5, rel=1e-15)
        assert pme_sigma(1.0, 2.0, 4.0) == pytest.approx(math.sqrt(8), rel=1e-15)

    def test_sigma_negative(self):
        with pytest.raises(InvalidParameterError):
            pme_sigma(-0.1, 3.0, 1.0)

    def test_ode_drift_stationary_point(self):
        assert not pme_ode_drift(np.array([0.4]), np.zeros((1, 2)), 3.0, 1.0).any()

    def test_ode_drift_m2_ignores_density(self):
        g = np.array([[0.3, -1.0]])
        a = pme_ode_drift(np.array([0.1]), g, 2.0, 1.5)
        b = pme_ode_drift(np.array([7.0]), g, 2.0, 1.5)
        np.testing.assert_array_equal(a, b)
        np.testing.assert_allclose(np.abs(a), 2 * 1.5 * np.abs(g))

    def test_ode_drift_smooth_profile(self):
        # the velocity field moves particles down the density gradient
        nu, m, x = 0.7, 3.0, 1.0
        rho = math.exp(-x * x)
        grad = -2 * x * math.exp(-x * x)
        want = -nu * m * rho ** (m - 2) * grad
        got = pme_ode_drift(np.array([rho]), np.array([[grad]]), m, nu)[0, 0]
        assert got == pytest.approx(want, abs=1e-6)
        assert got > 0

    def test_ode_transports_mass_outward(self):
        # one deterministic step from a peaked profile spreads the particles
        p = pme_problem(1, t0=1.0, deterministic=True)
        m = MlpDensity(Domain.box(2.0, 1), 1.0, 0.1, hidden=(16,), activation="softplus", beta=20, seed=0)
        grid = TimeGrid(1.0, 0.01, 1)
        ens = simulate_batch(p, _barenblatt_field_model(), grid, 500, seed=0)
        assert ens.positions[1].std() > ens.positions[0].std()
        assert m.spatial_gradient

    def test_ode_needs_spatial_gradient(self):
        p = pme_problem(1, t0=1.0, deterministic=True)
        m = MlpDensity(Domain.box(2.0, 1), 1.0, 0.1, hidden=(4,), activation="relu")
        with pytest.raises(CapabilityError):
            simulate_batch(p, m, TimeGrid(1.0, 0.01, 1), 10, seed=0)


class _BarenblattField:
    def __init__(self, p, t):
        self.p, self.t = p, t

    def density(self, x):
        return self.p.normalized(self.t, x)

    def grad(self, x):
        h = 1e-6
        return ((self.p.normalized(self.t, x + h) - self.p.normalized(self.t, x - h)) / (2 * h))[:, None]


class _BarenblattFrozen:
    def __init__(self, grid):
        self.grid = grid
        self.p = BarenblattParams(3.0, PME_C, 1)

    def field(self, m):
        return _BarenblattField(self.p, self.grid.time(m))

    def stats(self):
        return {}


def _barenblatt_field_model():
    class M:
        def freeze(self, grid, **kw):
            return _BarenblattFrozen(grid)

    return M()


class TestKellerSegel:
    def test_grad_examples(self):
        g, _ = ks_grad_W(np.array([[1.0, 0.0]]))
        np.testing.assert_allclose(g, [[1 / (2 * math.pi), 0.0]], rtol=1e-15)
        g3, _ = ks_grad_W(np.array([[1.0, 0.0, 0.0]]))
        np.testing.assert_allclose(g3, [[1 / (4 * math.pi), 0.0, 0.0]], rtol=1e-14)

    def test_constant_matches_ball_volume(self):
        assert ks_constant(3) == pytest.approx(1 / (4 * math.pi), rel=1e-14)
        assert ks_constant(4) == pytest.approx(1 / (8 * unit_ball_volume(4)), rel=1e-14)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (6, 2), elements=st.floats(-5, 5)))
    def test_grad_antisymmetric(self, x):
        a, _ = ks_grad_W(x)
        b, _ = ks_grad_W(-x)
        np.testing.assert_array_equal(a, -b)

    def test_clamp_counts_and_direction(self):
        x = np.array([[1e-5, 0.0], [0.0, 0.0], [2.0, 0.0]])
        g, clamps = ks_grad_W(x)
        assert clamps == 2  # the zero offset is below the cutoff as well
        np.testing.assert_allclose(g[0], [1 / (2 * math.pi * 1e-3), 0.0], rtol=1e-12)
        assert not g[1].any()

    def test_drift_single_atom_cloud(self, rng):
        x = rng.normal(size=(5, 2))
        d, _ = ks_drift(x, np.zeros((1, 2)))
        g, _ = ks_grad_W(x)
        np.testing.assert_array_equal(d, -g)

    def test_drift_symmetric_cloud(self):
        d, _ = ks_drift(np.zeros((1, 2)), np.array([[0.5, 0.2], [-0.5, -0.2]]))
        np.testing.assert_allclose(d, 0.0, atol=1e-17)

    def test_drift_against_naive_loop(self, rng):
        x = rng.normal(size=(7, 2))
        cloud = rng.normal(size=(30, 2))
        d, _ = ks_drift(x, cloud)
        want = np.zeros_like(x)
        for i in range(7):
            for c in cloud:
                r = x[i] - c
                want[i] -= r / (2 * math.pi * (r @ r)) / 30
        np.testing.assert_allclose(d, want, rtol=0, atol=1e-12)

    def test_drift_antisymmetric_under_negation(self, rng):
        x = rng.normal(size=(4, 2))
        cloud = rng.normal(size=(20, 2))
        a, _ = ks_drift(x, cloud)
        b, _ = ks_drift(-x, -cloud)
        np.testing.assert_allclose(a, -b, rtol=0, atol=1e-15)

    def test_slope_constant(self):
        assert KS_SLOPE == pytest.approx(3.84085, abs=5e-6)

    def test_initial_density(self):
        p = ks_problem("gauss")
        x = np.array([[0.0, 0.0], [0.3, -0.2]])
        want = np.exp(-(x**2).sum(1) / 0.36) / (0.36 * math.pi)
        np.testing.assert_allclose(p.initial_density(x), want, rtol=1e-14)

    def test_mixture_initial_weights(self, rng):
        p = ks_problem("mix")
        x = p.sample_initial(60_000, rng)
        assert (x[:, 0] > -0.25).mean() == pytest.approx(2 / 3, abs=0.01)

    def test_unknown_init(self):
        with pytest.raises(InvalidParameterError):
            ks_problem("ring")


class TestCurieWeiss:
    def test_drift_examples(self):
        assert cw_drift(0.0, 0.0) == 0.0
        assert cw_drift(1.0, 1.0, 1.0, -0.1) == pytest.approx(-0.1, rel=1e-15)
        assert cw_drift(1.0, 0.0) == 0.0 and cw_drift(-1.0, 0.0) == 0.0

    def test_unnormalized_values(self):
        assert cw_unnormalized(0.0) == 1.0
        assert cw_unnormalized(1.0) == pytest.approx(math.exp(0.5), rel=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-6, 6))
    def test_invariant_even(self, x):
        assert cw_invariant_density(x) == cw_invariant_density(-x)

    def test_normalizer_against_dense_oracle(self):
        assert cw_normalizer(1.0) == pytest.approx(C_CW_BETA1, rel=1e-9)
        assert midpoint(cw_unnormalized, -6, 6, 1_000_000) == pytest.approx(C_CW_BETA1, rel=1e-9)

    def test_coupling_opposes_large_mean(self):
        assert cw_drift(0.0, 5.0, 1.0, -0.1) < 0 < cw_drift(0.0, -5.0, 1.0, -0.1)

    def test_decoupled_mean_relaxes(self):
        prob = cw_problem(coupling=0.0)
        res = baseline_poc(prob, 4000, TimeGrid.from_step(0.0, 20.0, 0.02), seed=5, keep_nodes=[0, 1000])
        m0, mT = res.snapshots[0].mean(), res.snapshots[1000].mean()
        assert m0 == pytest.approx(1.0, abs=0.05)
        assert abs(mT) < 0.5 * m0


class TestFractional:
    def test_sigma_examples(self):
        assert fpme_sigma(0.4, 2.0, 1.0) == pytest.approx(0.4, rel=1e-15)
        assert fpme_sigma(0.0, 2.0, 1.0) == 0.0
        assert fpme_sigma(0.5, 3.0, 1.0) == pytest.approx(0.25, rel=1e-15)

    def test_sigma_negative(self):
        with pytest.raises(InvalidParameterError):
            fpme_sigma(-1e-3, 2.0, 1.0)

    def test_problem_noise(self):
        p = fpme_problem()
        src = p.noise_source(0)
        assert src.kind == "alpha_stable" and src.alpha == 1.0

    def test_initial_law_is_normalized_barenblatt(self, rng):
        p = fpme_problem()
        x = p.sample_initial(20_000, rng)
        R = BarenblattParams(3.0, PME_C, 1).support_radius(1.0)
        assert np.abs(x).max() <= R
        assert midpoint(lambda v: p.initial_density(v[:, None]), -R, R, 100_000) == pytest.approx(1.0, abs=1e-6)
