import time

import pytest

from nbwalk import audit, spectral


@pytest.fixture
def perturbed_roots(monkeypatch):
    """Shift the dominant eigenvalue by a relative 1e-6, as a wrong closed form would."""
    original = spectral._roots

    def shifted(dhat, m):
        lp, lm, disc = original(dhat, m)
        return lp * (1 + 1e-6), lm, disc

    monkeypatch.setattr(spectral, "_roots", shifted)


def test_audit_catches_wrong_eigenvalues(perturbed_roots):
    assert not audit.check_eigen_residuals(samples=10).passed
    assert not audit.check_three_way(cases=((2, 8),), samples=5).passed


def test_independent_checks_unaffected_by_eigenvalues(perturbed_roots):
    assert audit.check_count_identities().passed
    assert audit.check_second_moment(nmax=12).passed
    assert audit.check_greens(samples=10).passed


def test_degenerate_wave_is_degenerate():
    for d in (2, 3, 4):
        from nbwalk.lattice import nearest_neighbor
        assert spectral.dominant_eigenvalues(nearest_neighbor(d), audit.degenerate_wave(d)).degenerate


def test_result_line_format():
    r = audit.CheckResult("x", True, seconds=1.234, skipped=[1, 2])
    assert r.line() == "PASS x [1.23s] (2 skipped)"
    assert r.to_dict()["skipped"] == [1, 2]


def test_unknown_check():
    with pytest.raises(KeyError):
        audit.run_audit(only=["nope"])


@pytest.mark.slow
def test_quick_audit_under_a_minute():
    t0 = time.perf_counter()
    results = audit.run_audit(quick=True)
    elapsed = time.perf_counter() - t0
    assert elapsed < 60
    assert all(r.passed for r in results), [r.line() for r in results if not r.passed]
    assert {r.name for r in results} == set(audit.CRITERIA)
