import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from deepspoc.errors import BlowUpError, DimensionError, EmptyBatchError, InvalidParameterError
from deepspoc.problems import ProblemSpec, zero_problem
from deepspoc.sde import (
    NoiseSource,
    TimeGrid,
    cauchy_from_uniform,
    euler_step,
    keyed_rng,
    sample_increment,
    simulate_batch,
    standard_symmetric_stable,
    write_trajectory_csv,
)


def const_problem(b=None, s=None, noise="none", dim=1):
    return ProblemSpec(
        name="const",
        dim=dim,
        drift=None if b is None else (lambda t, x, f: np.full_like(x, b)),
        diffusion=None if s is None else (lambda t, x, f: s),
        noise=noise,
        sample_initial=lambda n, rng: rng.standard_normal((n, dim)),
    )


class TestTimeGrid:
    def test_nodes(self):
        g = TimeGrid(1.0, 1.0, 100)
        assert g.dt == pytest.approx(0.01)
        assert g.times[0] == 1.0 and g.times[-1] == pytest.approx(2.0)
        assert len(g.times) == 101

    def test_from_step(self):
        assert TimeGrid.from_step(0.1, 0.2, 0.005).M == 40

    @pytest.mark.parametrize("M", [0, -3])
    def test_rejects_empty(self, M):
        with pytest.raises(InvalidParameterError):
            TimeGrid(0.0, 1.0, M)

    def test_step_must_divide(self):
        with pytest.raises(InvalidParameterError):
            TimeGrid.from_step(0.0, 1.0, 0.3)


class TestIncrements:
    def test_none_is_zero(self):
        out = sample_increment(NoiseSource("none", 3), 0.7, 3)
        assert out.shape == (3, 3) and not out.any()

    def test_cauchy_inverse_cdf_at_half(self):
        assert cauchy_from_uniform(0.5) == 0.0

    def test_brownian_variance(self):
        dt = 0.01
        dz = sample_increment(NoiseSource("brownian", 1, seed=3), dt, 100_000)
        assert 0.97 * dt <= dz.var() <= 1.03 * dt

    def test_cauchy_ks_distance(self):
        dz = sample_increment(NoiseSource("alpha_stable", 1, alpha=1.0, seed=5), 1.0, 100_000).ravel()
        assert abs(np.median(dz)) < 0.02
        d = stats.kstest(dz, lambda x: np.arctan(x) / math.pi + 0.5).statistic
        assert d < 0.01

    @pytest.mark.parametrize("alpha", [0.7, 1.5])
    def test_cms_matches_scipy_levy_stable(self, alpha):
        draws = standard_symmetric_stable(alpha, 50_000, np.random.default_rng(1))
        ref = stats.levy_stable(alpha, 0.0)
        assert stats.kstest(draws, ref.cdf).statistic < 0.01

    def test_stable_scaling_with_dt(self):
        src = NoiseSource("alpha_stable", 1, alpha=1.0, seed=9)
        a = sample_increment(src, 1.0, 1000)
        b = sample_increment(src, 0.25, 1000)
        np.testing.assert_allclose(b, 0.25 * a)

    @pytest.mark.parametrize("alpha", [0.0, 2.0, 2.5, -1.0])
    def test_stable_alpha_range(self, alpha):
        with pytest.raises(InvalidParameterError):
            NoiseSource("alpha_stable", 1, alpha=alpha)

    def test_bad_dt_and_count(self):
        src = NoiseSource("brownian", 1)
        with pytest.raises(InvalidParameterError):
            sample_increment(src, 0.0, 3)
        with pytest.raises(InvalidParameterError):
            sample_increment(src, 0.1, 0)

    def test_keyed_streams_are_deterministic_and_distinct(self):
        a = keyed_rng(1, 2, 3, 0).random(4)
        b = keyed_rng(1, 2, 3, 0).random(4)
        c = keyed_rng(1, 2, 4, 0).random(4)
        assert np.array_equal(a, b) and not np.array_equal(a, c)


class TestEulerStep:
    def test_identity(self):
        x = np.arange(6.0).reshape(3, 2)
        assert np.array_equal(euler_step(x, 0.1, np.zeros_like(x), 0.0, np.zeros_like(x)), x)

    def test_drift_arithmetic(self):
        assert euler_step(np.array([[2.0]]), 0.1, np.array([[-1.0]]), 0.0, np.zeros((1, 1)))[0, 0] == pytest.approx(1.9)

    def test_noise_arithmetic(self):
        assert euler_step(np.array([[0.0]]), 0.1, np.array([[0.0]]), 0.5, np.array([[0.2]]))[0, 0] == pytest.approx(0.1)

    def test_full_matrix_diffusion(self):
        x = np.zeros((2, 2))
        s = np.array([[[1.0, 2.0], [0.0, 1.0]]] * 2)
        dz = np.array([[1.0, 1.0], [0.5, -1.0]])
        out = euler_step(x, 1.0, None, s, dz)
        np.testing.assert_allclose(out, [[3.0, 1.0], [-1.5, -1.0]])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            euler_step(np.zeros((3, 2)), 0.1, np.zeros((2, 2)), 1.0, np.zeros((3, 2)))
        with pytest.raises(DimensionError):
            euler_step(np.zeros((3, 2)), 0.1, None, 1.0, np.zeros((3, 1)))
        with pytest.raises(DimensionError):
            euler_step(np.zeros(3), 0.1, None, 1.0, np.zeros(3))

    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(1e-4, 1.0), st.floats(0, 3), st.floats(-3, 3))
    def test_scalar_formula(self, x, b, dt, s, dz):
        out = euler_step(np.array([[x]]), dt, np.array([[b]]), s, np.array([[dz]]))[0, 0]
        assert out == pytest.approx(x + b * dt + s * dz, abs=1e-12)


class TestSimulateBatch:
    grid = TimeGrid(0.0, 1.0, 10)

    def test_zero_dynamics_conserve_positions(self):
        ens = simulate_batch(zero_problem(2), None, self.grid, 50, seed=1)
        assert ens.positions.shape == (11, 50, 2)
        assert all(np.array_equal(ens.positions[m], ens.positions[0]) for m in range(11))

    def test_constant_drift(self):
        g = TimeGrid(0.0, 0.01, 1)
        ens = simulate_batch(const_problem(b=1.0), None, g, 4, seed=0)
        np.testing.assert_array_equal(ens.positions[1], ens.positions[0] + 0.01)

    def test_injected_increment(self):
        g = TimeGrid(0.0, 0.1, 1)
        prob = const_problem(s=1.0, noise="brownian")
        ens = simulate_batch(prob, None, g, 3, seed=0, injected={1: np.full((3, 1), 0.3)})
        np.testing.assert_allclose(ens.positions[1], ens.positions[0] + 0.3, rtol=0, atol=1e-15)

    def test_initial_rows_come_from_mu0(self):
        ens = simulate_batch(const_problem(s=1.0, noise="brownian"), None, self.grid, 20_000, seed=4)
        assert stats.kstest(ens.positions[0].ravel(), "norm").statistic < 0.02

    def test_determinism(self):
        prob = const_problem(b=0.3, s=0.7, noise="brownian")
        a = simulate_batch(prob, None, self.grid, 100, seed=11, epoch=3)
        b = simulate_batch(prob, None, self.grid, 100, seed=11, epoch=3)
        c = simulate_batch(prob, None, self.grid, 100, seed=11, epoch=4)
        assert np.array_equal(a.positions, b.positions)
        assert not np.array_equal(a.positions, c.positions)

    def test_split_batches_agree_with_whole(self):
        # increments are rows of a per-node draw, so a particle's path does not
        # depend on which other particles are simulated alongside it
        prob = const_problem(s=1.0, noise="brownian")
        x0 = np.linspace(-1, 1, 8)[:, None]
        whole = simulate_batch(prob, None, self.grid, 8, seed=2, x0=x0)
        inc = {m: sample_increment(prob.noise_source(2), self.grid.dt, 8, 0, m) for m in range(1, 11)}
        first = simulate_batch(prob, None, self.grid, 4, seed=2, x0=x0[:4], injected={m: v[:4] for m, v in inc.items()})
        assert np.array_equal(first.positions, whole.positions[:, :4])

    def test_empty_batch(self):
        with pytest.raises(EmptyBatchError):
            simulate_batch(zero_problem(), None, self.grid, 0, seed=0)

    def test_blow_up_names_particle_and_node(self):
        prob = ProblemSpec(name="bad", dim=1, noise="none",
                           drift=lambda t, x, f: np.where(np.arange(len(x))[:, None] == 2, np.inf, 0.0),
                           sample_initial=lambda n, rng: np.zeros((n, 1)))
        with pytest.raises(BlowUpError) as exc:
            simulate_batch(prob, None, self.grid, 5, seed=0)
        assert exc.value.particle == 2 and exc.value.node == 1

    def test_trajectory_csv(self, tmp_path):
        ens = simulate_batch(zero_problem(2), None, TimeGrid(0.0, 1.0, 2), 3, seed=0)
        p = tmp_path / "traj.csv"
        write_trajectory_csv(p, ens, epoch=7)
        lines = p.read_text().splitlines()
        assert lines[0] == "epoch,m,t,i,x0,x1"
        assert len(lines) == 1 + 3 * 3
        assert lines[1].startswith("7,0,0.0,0,")
