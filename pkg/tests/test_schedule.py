import numpy as np
import pytest
from hypothesis import given, strategies as st

from lead.schedule import ScheduleError, build_schedule


def test_linear_endpoints():
    s = build_schedule(100, "linear", 1e-4, 0.05)
    assert s.beta_at(1) == pytest.approx(1e-4)
    assert s.beta_at(100) == pytest.approx(0.05)
    assert s.alpha_bar_at(0) == 1.0


def test_alpha_bar_is_running_product():
    s = build_schedule(30)
    manual = 1.0
    for t in range(1, 31):
        manual *= 1 - s.beta_at(t)
        assert s.alpha_bar_at(t) == pytest.approx(manual, rel=1e-12)
        assert s.beta_bar_at(t) == pytest.approx(1 - manual, rel=1e-12)


def test_alpha_bar_decreasing_both_kinds():
    for kind in ("linear", "cosine"):
        ab = build_schedule(50, kind).alpha_bar
        assert np.all(np.diff(ab) < 0)


def test_single_step_schedule():
    s = build_schedule(1)
    assert s.T == 1 and s.beta_at(1) == pytest.approx(1e-4)


@pytest.mark.parametrize("kw", [dict(T=0), dict(T=-3), dict(beta_min=0.0),
                                dict(beta_min=0.1, beta_max=0.05), dict(beta_max=1.0),
                                dict(kind="sigmoid")])
def test_bad_parameters(kw):
    with pytest.raises(ScheduleError):
        build_schedule(**kw)


def test_out_of_range_time():
    s = build_schedule(10)
    with pytest.raises(ScheduleError):
        s.beta_at(0)
    with pytest.raises(ScheduleError):
        s.beta_at(11)
    with pytest.raises(ScheduleError):
        s.alpha_bar_at(-1)


def test_arrays_are_read_only():
    s = build_schedule(10)
    with pytest.raises(ValueError):
        s.beta[0] = 0.5


@given(st.integers(2, 200))
def test_posterior_coefficients_match_gaussian_conditioning(t_max):
    # the coefficients of E[x^{t-1} | x^t, x^0] follow from the joint covariance
    s = build_schedule(t_max)
    for t in (2, t_max):
        ab, abp, b = s.alpha_bar_at(t), s.alpha_bar_at(t - 1), s.beta_at(t)
        # x^{t-1} = sqrt(abp) x0 + sqrt(1-abp) e1 ; x^t = sqrt(1-b) x^{t-1} + sqrt(b) e2
        cov_prev_t = np.sqrt(1 - b) * (1 - abp)
        var_t = 1 - ab
        ct = cov_prev_t / var_t
        c0 = np.sqrt(abp) - ct * np.sqrt(ab)
        got = s.posterior_coefficients(t)
        assert got[0] == pytest.approx(c0, abs=1e-12)
        assert got[1] == pytest.approx(ct, abs=1e-12)
