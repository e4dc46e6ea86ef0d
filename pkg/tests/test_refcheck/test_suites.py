"""Tests for ernet.refcheck.suites."""

from __future__ import annotations

import math

import numpy as np
import pytest

from ernet.refcheck.suites import (
    GRADIENT_DENSE_WIDTH,
    SuiteResult,
    analytic_suite,
    equivalence_suite,
    model_gradient_suite,
    op_gradient_suite,
    relative_error,
    run_all,
)


def _failures(results: list[SuiteResult]) -> list[str]:
    return [f"{r.suite}/{r.name}: {r.max_error:.3e}" for r in results if not r.passed]


class TestSuiteResult:
    """Verify pass/fail evaluation."""

    def test_within_tolerance(self) -> None:
        assert SuiteResult("s", "n", 1, 1e-12, 1e-10).passed

    def test_over_tolerance(self) -> None:
        assert not SuiteResult("s", "n", 1, 1e-3, 1e-10).passed

    def test_nan_fails(self) -> None:
        assert not SuiteResult("s", "n", 1, math.nan, 1.0).passed

    def test_relative_error(self) -> None:
        assert relative_error(np.array([1.0, 2.1]), np.array([1.0, 2.0])) == pytest.approx(0.05)


class TestSuites:
    """Every oracle check passes on the fast paths."""

    def test_equivalence(self) -> None:
        results = equivalence_suite(seed=3, instances=5)
        assert len(results) == 7
        assert _failures(results) == []

    def test_analytic(self) -> None:
        assert _failures(analytic_suite()) == []

    def test_analytic_covers_invariances(self) -> None:
        names = {r.name for r in analytic_suite(seed=3)}
        assert {
            "NCC symmetry",
            "NCC of 2*target + 3",
            "NCC of independent noise",
            "smoothness under complement",
            "smoothness under axis permutation",
            "Dice symmetry",
        } <= names

    def test_op_gradients(self) -> None:
        assert _failures(op_gradient_suite(seed=1)) == []

    def test_run_all_without_model(self) -> None:
        results = run_all(instances=2, include_model=False)
        assert {r.suite for r in results} == {"equivalence", "analytic", "gradient"}
        assert _failures(results) == []

    def test_model_gradients_sampled(self) -> None:
        results = model_gradient_suite(entries_per_tensor=1)
        assert results
        assert {r.cases for r in results} == {1}
        assert _failures(results) == []

    def test_model_gradients_rejects_zero_entries(self) -> None:
        with pytest.raises(ValueError, match="entries_per_tensor"):
            model_gradient_suite(entries_per_tensor=0)

    @pytest.mark.slow
    def test_model_gradients_every_entry(self) -> None:
        results = model_gradient_suite()
        sizes = {r.name: r.cases for r in results}
        assert sizes["reg.fc1.weight"] == 12 * GRADIENT_DENSE_WIDTH
        assert _failures(results) == []
