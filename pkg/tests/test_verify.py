"""The self-verification suites themselves: clean builds pass, injected
faults are caught, and runs are seed-deterministic."""

import numpy as np

from snewton import stepsize
from snewton.verify import SuiteResult, run_all

EXPECTED_SUITES = [
    "inverse_bounds",
    "perturbed_inverse",
    "range_restricted",
    "directional_limit",
    "smooth_svd",
    "bordered",
    "scalar_stepsize",
    "es_consistency",
]


def test_all_suites_pass_on_clean_build():
    results = run_all(seed=0, trials=8)
    assert [r.name for r in results] == EXPECTED_SUITES
    assert all(isinstance(r, SuiteResult) for r in results)
    failures = [r for r in results if not r.passed]
    assert failures == [], [(r.name, r.details) for r in failures]


def test_second_seed_also_passes():
    assert all(r.passed for r in run_all(seed=12345, trials=6))


def test_details_are_informative():
    results = {r.name: r for r in run_all(seed=0, trials=8)}
    assert results["inverse_bounds"].details["worst_slack"] >= 0.0
    assert results["perturbed_inverse"].details["worst_spread"] < 10.0
    assert results["bordered"].details["worst_regular_error"] <= 1e-10
    assert results["scalar_stepsize"].details["lambda_es"] == 0.4


def test_injected_es_fault_is_detected():
    results = {r.name: r for r in run_all(seed=0, trials=6, es_fault=0.05)}
    assert not results["scalar_stepsize"].passed
    assert not results["es_consistency"].passed
    # the linear-algebra suites do not involve the stepsize hook
    for name in ("inverse_bounds", "perturbed_inverse", "range_restricted",
                 "smooth_svd", "bordered"):
        assert results[name].passed


def test_fault_hook_is_restored_afterwards():
    before = stepsize._ES_FAULT
    run_all(seed=0, trials=4, es_fault=0.25)
    assert stepsize._ES_FAULT == before


def test_runs_are_deterministic_for_a_seed():
    a = run_all(seed=7, trials=6)
    b = run_all(seed=7, trials=6)
    for ra, rb in zip(a, b):
        assert ra.name == rb.name
        assert ra.passed == rb.passed
        for key, va in ra.details.items():
            vb = rb.details[key]
            if isinstance(va, float):
                assert va == vb
            elif isinstance(va, (list, np.ndarray)):
                assert np.array_equal(va, vb)


def test_exceptions_count_as_failures(monkeypatch):
    from snewton import verify

    def boom(rng, trials):
        raise RuntimeError("synthetic crash")

    boom.__name__ = "suite_inverse_bounds"
    monkeypatch.setattr(verify, "_SUITES", (boom,))
    results = run_all(seed=0, trials=2)
    assert len(results) == 1
    assert results[0].name == "inverse_bounds"
    assert not results[0].passed
    assert "synthetic crash" in results[0].details["exception"]
