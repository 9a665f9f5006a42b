import pytest

from src.selftest import SUITES, SuiteResult, run_selftest


def test_every_suite_passes():
    results = run_selftest(seed=0)
    assert [r.name for r in results] == list(SUITES)
    for r in results:
        assert r.passed, (r.name, r.failures[:3])
        assert r.checks > 0


def test_suites_can_be_selected():
    results = run_selftest(seed=1, names=["sherman-morrison"])
    assert [r.name for r in results] == ["sherman-morrison"]
    assert results[0].checks == 1000


def test_suite_result():
    suite = SuiteResult("demo")
    suite.check(True, "fine")
    suite.check(False, "broken")
    assert not suite.passed
    assert suite.as_dict() == {"name": "demo", "passed": False, "checks": 2, "failures": ["broken"], "seconds": 0.0}


@pytest.mark.parametrize("seed", [3, 11])
def test_suites_pass_for_other_seeds(seed):
    results = run_selftest(seed=seed, names=["objective-matrix-form", "consensus-formula", "gated-update"])
    assert all(r.passed for r in results)
