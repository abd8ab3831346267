"""
Tests for Brownian path generation and coarse-graining.
"""

import math

import numpy as np
import pytest
from scipy import stats

from stochnls import (
    ConfigurationError, ContractViolation, NormalizedIncrement, coarse_increments,
    dump_path, generate_path, load_path, normalized_increments,
)
from stochnls.noise import coarsen, sample_stream


class TestGeneratePath:

    def test_reproducible(self):
        a = generate_path(7, 3, 1.0, 256)
        b = generate_path(7, 3, 1.0, 256)
        np.testing.assert_array_equal(a.dW, b.dW)

    def test_samples_are_independent_streams(self):
        a = generate_path(7, 0, 1.0, 256)
        b = generate_path(7, 1, 1.0, 256)
        assert not np.array_equal(a.dW, b.dW)

    def test_increments_are_read_only(self):
        path = generate_path(1, 0, 1.0, 16)
        with pytest.raises(ValueError):
            path.dW[0] = 0.0

    def test_rejects_non_dyadic_step_count(self):
        with pytest.raises(ConfigurationError) as info:
            generate_path(1, 0, 1.0, 100)
        assert info.value.key == "tau_ref"

    def test_rejects_non_positive_horizon(self):
        with pytest.raises(ConfigurationError) as info:
            generate_path(1, 0, 0.0, 16)
        assert info.value.key == "t_end"

    def test_rejects_negative_seed(self):
        with pytest.raises(ConfigurationError):
            sample_stream(-1, 0)

    def test_increments_are_gaussian(self):
        path = generate_path(20210101, 0, 1.0, 2 ** 14)
        chi = path.dW / math.sqrt(path.tau_fine)
        assert stats.kstest(chi, "norm").pvalue > 1e-3
        assert np.var(chi) == pytest.approx(1.0, abs=0.05)

    def test_values_start_at_zero(self):
        path = generate_path(3, 0, 2.0, 64)
        values = path.values()
        assert len(values) == 65
        assert values[0] == 0.0
        assert values[-1] == pytest.approx(path.terminal_value(), abs=1e-13)


class TestCoarsening:

    def test_pairwise_sums(self):
        path = generate_path(5, 0, 1.0, 64)
        np.testing.assert_array_equal(coarse_increments(path, 32), path.dW[0::2] + path.dW[1::2])

    def test_finest_level_is_a_copy(self):
        path = generate_path(5, 0, 1.0, 64)
        coarse = coarse_increments(path, 64)
        np.testing.assert_array_equal(coarse, path.dW)
        coarse[0] = 99.0
        assert path.dW[0] != 99.0

    def test_every_level_sums_to_the_same_terminal_value(self):
        path = generate_path(11, 2, 1.0, 2 ** 10)
        beta_T = path.terminal_value()
        for level in range(11):
            coarse = coarse_increments(path, 2 ** level)
            assert coarsen(coarse, len(coarse))[0] == beta_T

    def test_chained_coarsening_is_bit_identical(self):
        path = generate_path(11, 2, 1.0, 2 ** 8)
        direct = coarse_increments(path, 2 ** 3)
        chained = coarsen(coarsen(path.dW, 4), 8)
        np.testing.assert_array_equal(direct, chained)

    def test_rejects_non_dividing_level(self):
        path = generate_path(5, 0, 1.0, 64)
        with pytest.raises(ConfigurationError) as info:
            coarse_increments(path, 128)
        assert info.value.key == "tau_ladder"
        with pytest.raises(ConfigurationError):
            coarse_increments(path, 24)

    def test_normalized_increments(self):
        path = generate_path(5, 0, 1.0, 64)
        chi = normalized_increments(path, 16)
        np.testing.assert_allclose(chi, coarse_increments(path, 16) / math.sqrt(1 / 16))

    def test_normalized_increment_round_trip(self):
        inc = NormalizedIncrement.from_increment(0.3, 0.25)
        assert inc.chi == pytest.approx(0.6)
        assert inc.raw == pytest.approx(0.3)


class TestPathFiles:

    def test_dump_and_load(self, tmp_path):
        path = generate_path(42, 9, 0.5, 128)
        loaded = load_path(dump_path(path, tmp_path / "path.csv"))
        assert (loaded.seed, loaded.sample_index, loaded.T, loaded.N_fine) == (42, 9, 0.5, 128)
        np.testing.assert_array_equal(loaded.dW, path.dW)

    def test_missing_header(self, tmp_path):
        target = tmp_path / "path.csv"
        target.write_text("# seed=1\ndW\n0.1\n")
        with pytest.raises(ContractViolation, match="lacks header"):
            load_path(target)
