"""Acceptance gate: the ten verification suites at their stated tolerances.

Each test prints one ``[PASS]``/``[FAIL]`` line (run with ``-s`` to see them
live; they are also in the captured output of failures).
"""

import pytest

from risjcas import verify

_cache: dict = {}


def _suite(name: str) -> verify.SuiteResult:
    if name not in _cache:
        fn = verify.SUITES[name]
        if name == "rcg_descent":
            traces = _suite("manifold_invariants").data.get("traces")
            _cache[name] = fn("default", traces=traces)
        else:
            _cache[name] = fn("default")
        print("\n" + _cache[name].line())
    return _cache[name]


@pytest.mark.parametrize("name", list(verify.SUITES))
def test_acceptance(name):
    res = _suite(name)
    assert res.passed, res.line()


def test_gradient_suite_runtime():
    assert _suite("gradients").seconds < 120.0


def test_admm_suite_runtime():
    assert _suite("admm_convergence").seconds < 600.0


def test_proposed_feasibility_mean_not_below_random_ris():
    """Averaged over the paired seeds of the benefit suite, optimizing the RIS never hurts feasibility."""
    runs = _suite("ris_benefit").data["runs"]
    assert runs["proposed"][:, 1].mean() >= runs["hb_rnd_ris"][:, 1].mean()
