"""
Tests for the time integrators.

Validates:
- one-step maps of Split, Exp and Mid
- the linear (V = 0) regime
- trajectory evolution, diagnostics and snapshot output
- L^2 conservation and symplecticity of Split
"""

import math

import numpy as np
import pandas as pd
import pytest

from stochnls import (
    ConfigurationError, ContractViolation, InstabilityError, Potential, PotentialKind,
    SchemeKind, SpectralGrid, StepperConfig, evolve, forward_transform, generate_path,
    hm_growth_rate, l2_norm, make_stepper, propagate_linear, random_field, sobolev_norm, step_exp,
    step_mid, step_split, symplectic_defect,
)
from stochnls.integrators import DIAGNOSTIC_COLUMNS, mid_residual


class TestSchemeKind:

    def test_parse(self):
        assert SchemeKind.parse("SPLIT") is SchemeKind.SPLIT
        assert SchemeKind.parse(" mid ") is SchemeKind.MID
        assert SchemeKind.parse(SchemeKind.EXP) is SchemeKind.EXP

    def test_unknown(self):
        with pytest.raises(ConfigurationError, match="unknown scheme") as info:
            SchemeKind.parse("rk4")
        assert info.value.key == "schemes"


class TestOneStepMaps:

    def test_split_preserves_l2(self, grid, cosine, rng):
        u = random_field(grid, rng)
        v = step_split(u, 0.3, 0.1, cosine, grid)
        assert l2_norm(v, grid) == pytest.approx(l2_norm(u, grid), rel=1e-14)

    def test_split_and_exp_reduce_to_propagator(self, grid, zero_potential, rng):
        u = random_field(grid, rng)
        split = step_split(u, 0.3, 0.1, zero_potential, grid)
        exp = step_exp(u, 0.3, 0.1, zero_potential, grid)
        np.testing.assert_array_equal(split, exp)
        np.testing.assert_allclose(split, propagate_linear(u, 0.3, grid), atol=1e-15)

    def test_mid_is_cayley_rotation_for_zero_potential(self, grid, zero_potential, rng):
        u = random_field(grid, rng)
        tau, chi = 0.01, 1.3
        v = step_mid(u, chi, tau, zero_potential, grid)
        a = math.sqrt(tau) * chi * grid.k2 / 2
        expected = np.exp(-2j * np.arctan(a)) * forward_transform(u, grid)
        np.testing.assert_allclose(forward_transform(v, grid), expected, atol=1e-15)
        assert l2_norm(v, grid) == pytest.approx(l2_norm(u, grid), rel=1e-14)

    def test_mid_solves_its_defining_relation(self, grid, cosine, rng):
        u = random_field(grid, rng)
        v = step_mid(u, -0.8, 0.05, cosine, grid)
        assert mid_residual(u, v, -0.8, 0.05, cosine, grid) <= 1e-12

    def test_stepper_feeds_mid_with_normalized_increments(self, grid, cosine, gaussian):
        tau, dbeta = 2.0 ** -6, 0.09
        stepper = make_stepper(StepperConfig(SchemeKind.MID, tau), cosine, grid)
        np.testing.assert_array_equal(stepper.step(gaussian, dbeta),
                                      step_mid(gaussian, dbeta / math.sqrt(tau), tau, cosine, grid))

    @pytest.mark.parametrize("tau", [0.0, 1.0, 2.0])
    def test_stepper_config_rejects_tau(self, tau):
        with pytest.raises(ContractViolation):
            StepperConfig(SchemeKind.SPLIT, tau)

    def test_stepper_config_for_run(self):
        config = StepperConfig.for_run("exp", 1.0, 256)
        assert config.scheme is SchemeKind.EXP
        assert config.tau == 2.0 ** -8

    def test_schemes_agree_to_first_order(self, grid, cosine, gaussian):
        tau = 2.0 ** -10
        dbeta = math.sqrt(tau) * 0.7
        split = step_split(gaussian, dbeta, tau, cosine, grid)
        exp = step_exp(gaussian, dbeta, tau, cosine, grid)
        assert l2_norm(exp - split, grid) < 10 * tau ** 2
        mid = make_stepper(StepperConfig(SchemeKind.MID, tau), cosine, grid).step(gaussian, dbeta)
        assert l2_norm(mid - split, grid) < 0.1


class TestEvolve:

    def test_zero_steps_returns_initial_field(self, grid, cosine, gaussian):
        path = generate_path(1, 0, 1.0, 16)
        result = evolve("split", gaussian, path, 0, cosine, grid)
        np.testing.assert_array_equal(result.state.u, gaussian)
        assert result.state.n == 0 and result.state.t == 0.0

    def test_diagnostics_and_snapshots(self, grid, cosine, gaussian):
        path = generate_path(1, 0, 1.0, 64)
        result = evolve(SchemeKind.EXP, gaussian, path, 16, cosine, grid, snapshot_every=5)
        frame = result.diagnostics
        assert list(frame.columns) == DIAGNOSTIC_COLUMNS
        assert len(frame) == 17
        assert frame["t"].iloc[-1] == pytest.approx(1.0)
        assert [s.n for s in result.snapshots] == [0, 5, 10, 15, 16]
        assert result.state.n == 16 and result.tau == 1 / 16

    def test_extra_sobolev_column(self, grid, cosine, gaussian):
        path = generate_path(1, 0, 1.0, 8)
        result = evolve("split", gaussian, path, 8, cosine, grid, m_diag=3)
        assert "h3" in result.diagnostics.columns
        assert 3 in result.state.hm

    def test_split_conserves_l2(self, grid, cosine, gaussian):
        path = generate_path(20210101, 0, 1.0, 2 ** 8)
        result = evolve("split", gaussian, path, 2 ** 8, cosine, grid)
        assert np.max(result.l2_drift()) <= 1e-10

    def test_linear_regime_is_exact(self, grid, zero_potential, gaussian):
        path = generate_path(3, 0, 1.0, 2 ** 6)
        exact = propagate_linear(gaussian, path.terminal_value(), grid)
        for scheme in ("split", "exp"):
            u = evolve(scheme, gaussian, path, 2 ** 6, zero_potential, grid).state.u
            assert l2_norm(u - exact, grid) <= 1e-12 * l2_norm(gaussian, grid)

    def test_uses_coarse_grained_path(self, grid, cosine, gaussian):
        path = generate_path(3, 0, 1.0, 2 ** 6)
        coarse = evolve("split", gaussian, path, 2 ** 3, cosine, grid)
        u = gaussian
        increments = path.dW.reshape(8, 8).sum(axis=1)
        for dbeta in increments:
            u = step_split(u, dbeta, 1 / 8, cosine, grid)
        assert l2_norm(coarse.state.u - u, grid) <= 1e-13

    def test_instability_is_reported(self):
        g = SpectralGrid(16)
        V = Potential(PotentialKind.TABULATED, 1e200 * np.cos(g.x), g)
        u0 = np.exp(-0.5 * (g.x - math.pi) ** 2)
        path = generate_path(1, 0, 1.0, 16)
        with np.errstate(all="ignore"):
            with pytest.raises(InstabilityError) as info:
                evolve("exp", u0, path, 16, V, g)
        assert info.value.step >= 1
        assert info.value.scheme == "exp"

    def test_write(self, grid, cosine, gaussian, tmp_path):
        path = generate_path(1, 0, 1.0, 8)
        result = evolve("mid", gaussian, path, 8, cosine, grid, snapshot_every=4)
        files = result.write(tmp_path, grid)
        assert (tmp_path / "diagnostics.csv").is_file()
        assert sorted(p.name for p in (tmp_path / "snapshots").iterdir()) == [
            "snapshot_00000000.csv", "snapshot_00000004.csv", "snapshot_00000008.csv"]
        frame = pd.read_csv(files["diagnostics"])
        assert len(frame) == 9

    def test_hm_growth_rate(self):
        frame = pd.DataFrame({"t": [0.0, 0.5, 1.0], "h1": [1.0, math.e ** 0.5, math.e ** 0.8]})
        assert hm_growth_rate(frame) == pytest.approx(1.0)
        assert hm_growth_rate(frame.iloc[:1]) == 0.0


    def test_hm_growth_rate_bounds_a_split_run(self, grid, cosine, gaussian):
        path = generate_path(20210101, 0, 1.0, 2 ** 8)
        frame = evolve("split", gaussian, path, 2 ** 8, cosine, grid).diagnostics
        rate = hm_growth_rate(frame)
        assert math.isfinite(rate)
        t = frame["t"].to_numpy()
        h1 = frame["h1"].to_numpy()
        assert np.all(h1 <= np.exp(rate * t) * h1[0] * (1 + 1e-12))


class TestSymplecticity:

    def test_split_is_symplectic(self, small_grid, rng):
        V = Potential.cosine(small_grid)
        for _ in range(20):
            u = random_field(small_grid, rng)
            tau = float(rng.uniform(0.01, 0.5))
            dbeta = math.sqrt(tau) * float(rng.standard_normal())
            assert symplectic_defect("split", u, dbeta, tau, V, small_grid) <= 1e-5

    def test_exp_is_not_symplectic(self, small_grid, rng):
        V = Potential.cosine(small_grid)
        u = random_field(small_grid, rng, amplitude=2.0)
        split = symplectic_defect("split", u, 0.2, 0.25, V, small_grid)
        exp = symplectic_defect("exp", u, 0.2, 0.25, V, small_grid)
        assert exp > 100 * split

    def test_rejects_large_grid(self, grid, cosine, gaussian):
        with pytest.raises(ConfigurationError):
            symplectic_defect("split", gaussian, 0.1, 0.1, cosine, grid)

    @pytest.mark.parametrize("scheme", ["split", "exp", "mid"])
    def test_linear_regime_is_symplectic(self, small_grid, rng, scheme):
        V = Potential.zero(small_grid)
        u = random_field(small_grid, rng)
        assert symplectic_defect(scheme, u, 0.3, 0.25, V, small_grid) <= 1e-8


class TestSplitRefinement:

    @pytest.mark.parametrize("tau", [2.0 ** -6, 2.0 ** -8])
    def test_one_step_against_substeps(self, grid, cosine, gaussian, tau):
        path = generate_path(20210101, 0, tau, 64)
        coarse = step_split(gaussian, path.terminal_value(), tau, cosine, grid)
        fine = gaussian
        for dbeta in path.dW:
            fine = step_split(fine, dbeta, tau / 64, cosine, grid)
        diff = sobolev_norm(coarse - fine, 1, grid)
        assert 0.0 < diff <= tau * sobolev_norm(gaussian, 3, grid)
