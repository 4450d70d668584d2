import pytest

from surreal import check
from surreal.manifold import PolarComplex


@pytest.mark.parametrize("name", sorted(check.SUITES))
def test_suites_pass_small_runs(name):
    r = check.SUITES[name](trials=20, seed=1)
    assert r.passed, r.line()
    assert r.trials == 20 and r.tol == check.TOLERANCES[name]


def test_suites_are_reproducible():
    a = check.equivariance(trials=30, seed=4)
    b = check.equivariance(trials=30, seed=4)
    assert (a.max_err, a.worst_trial) == (b.max_err, b.worst_trial)


def test_gradcheck_covers_every_case():
    r = check.gradcheck(trials=len(check.GRAD_CASES), seed=0)
    assert r.passed and r.checked > 0


def test_broken_action_is_caught(monkeypatch):
    real_act = check.act

    def off_by_a_bit(g, z):
        out = real_act(g, z)
        return PolarComplex(out.log_r * 1.001, out.theta)

    monkeypatch.setattr(check, "act", off_by_a_bit)
    r = check.isometry(trials=200, seed=7)
    assert not r.passed
    assert "FAIL" in r.line() and "--seed 7" in r.line()
    assert 0 <= r.worst_trial < 200


def test_broken_kernel_is_caught(monkeypatch):
    real = check.kernels.wfm_forward

    # a constant offset would still be equivariant; a gain error is not
    def gain(lr, th, idx, t):
        y_r, y_t = real(lr, th, idx, t)
        return y_r * (1 + 1e-6), y_t

    monkeypatch.setattr(check.kernels, "wfm_forward", gain)
    assert not check.equivariance(trials=20, seed=0).passed


def test_zero_trials_fail():
    assert not check.oracle(trials=0).passed


def test_rel_error_floor():
    assert check.rel_error(1e-9, 0.0) == pytest.approx(1e-3)
    assert check.rel_error(2.0, 1.0) == pytest.approx(0.5)
