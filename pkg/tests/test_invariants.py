"""
Tests for the invariant battery behind the selftest command.
"""

import json

import pytest

from stochnls import InvariantChecker, Severity

CHEAP_CHECKS = [
    "transform_roundtrip",
    "parseval",
    "propagator_isometry",
    "propagator_group",
    "propagator_increment_bound",
    "convolution_direct_sum",
    "consistency_defect_order",
    "split_l2_conservation",
    "mid_linear_l2_conservation",
    "split_symplecticity",
    "linear_regime_exact",
    "path_coupling",
]


@pytest.fixture
def checker():
    return InvariantChecker(draws=50)


class TestInvariantChecker:

    def test_cheap_checks_pass(self, checker):
        result = checker.run_suite(CHEAP_CHECKS)
        assert [c.name for c in result.checks] == CHEAP_CHECKS
        assert result.passed, [c.to_dict() for c in result.hard_failures]

    def test_every_check_is_named(self, checker):
        names = list(checker.checks())
        assert len(names) == len(set(names))
        assert set(CHEAP_CHECKS) <= set(names)

    def test_unknown_check(self, checker):
        with pytest.raises(KeyError):
            checker.run_suite(["energy_conservation"])

    def test_raising_check_fails_the_suite(self, checker, monkeypatch):
        def broken():
            raise RuntimeError("boom")

        monkeypatch.setattr(checker, "check_parseval", broken)
        result = checker.run_suite(["transform_roundtrip", "parseval"])
        assert not result.passed
        failed = result.get_check("parseval")
        assert failed.severity is Severity.HARD
        assert "boom" in failed.description

    def test_soft_failure_keeps_suite_passing(self, checker, monkeypatch):
        soft = checker.check_gaussianity()
        soft.passed = False
        monkeypatch.setattr(checker, "check_gaussianity", lambda: soft)
        result = checker.run_suite(["parseval", "increment_gaussianity"])
        assert result.passed
        assert [c.name for c in result.soft_failures] == ["increment_gaussianity"]

    def test_mid_linear_order(self, checker):
        check = checker.run_suite(["mid_linear_order"]).get_check("mid_linear_order")
        assert check.severity is Severity.SOFT
        assert check.passed, check.measured
        assert check.measured <= 1.3

    def test_result_is_json_serializable(self, checker):
        result = checker.run_suite(["parseval", "path_coupling"])
        payload = json.loads(json.dumps(result.to_dict()))
        assert payload["passed"] is True
        assert {c["name"] for c in payload["checks"]} == {"parseval", "path_coupling"}
        assert list(result.frame().columns) == ["name", "severity", "passed", "measured", "threshold"]


@pytest.mark.slow
def test_full_suite_passes():
    result = InvariantChecker().run_suite()
    assert result.passed, [c.to_dict() for c in result.hard_failures]
