import math

import numpy as np
import pytest

from lipolysis.integrator import (
    Event,
    IntegratorConfig,
    NonFiniteError,
    StepLimitError,
    integrate,
    stiffness_probe,
)

METHODS = ["rodas4", "dopri5"]


def decay(y):
    return -y


def mm(y):
    return np.array([-y[0] / (1.0 + y[0])])


@pytest.mark.parametrize("method", METHODS)
def test_exponential_decay(method):
    traj = integrate(decay, [1.0], IntegratorConfig(t_end=1.0, method=method))
    assert traj.y[-1, 0] == pytest.approx(math.exp(-1), rel=1e-7)
    assert traj.t[-1] == 1.0


@pytest.mark.parametrize("method", METHODS)
def test_dense_output_accuracy(method):
    traj = integrate(decay, [1.0], IntegratorConfig(t_end=3.0, method=method))
    t = np.linspace(0, 3, 97)
    np.testing.assert_allclose(traj(t)[:, 0], np.exp(-t), rtol=1e-6)


@pytest.mark.parametrize("method", METHODS)
def test_event_mm_half_time(method):
    ev = Event("half", lambda y: y[0] - 0.5, direction=-1)
    traj = integrate(mm, [1.0], IntegratorConfig(t_end=5.0, method=method), [ev])
    assert traj.event_time("half") == pytest.approx(0.5 + math.log(2), abs=1e-7)
    assert traj.event("half").state[0] == pytest.approx(0.5, abs=1e-9)


def test_terminal_event_stops():
    ev = Event("half", lambda y: y[0] - 0.5, direction=-1, terminal=True)
    traj = integrate(mm, [1.0], IntegratorConfig(t_end=5.0), [ev])
    assert traj.status == "event"
    assert traj.t_final == pytest.approx(0.5 + math.log(2), abs=1e-7)


def test_event_direction_filter():
    ev = Event("up", lambda y: y[0] - 0.5, direction=+1)
    traj = integrate(mm, [1.0], IntegratorConfig(t_end=5.0), [ev])
    assert traj.event("up") is None


def test_events_idempotent_under_t_eval():
    ev = Event("half", lambda y: y[0] - 0.5, direction=-1)
    a = integrate(mm, [1.0], IntegratorConfig(t_end=5.0), [ev])
    b = integrate(mm, [1.0], IntegratorConfig(t_end=5.0), [ev], t_eval=np.linspace(0, 5, 7))
    assert a.event_time("half") == b.event_time("half")


def test_convergence_order_rodas():
    # One step of size h with tolerances loose enough to accept it.
    errs = []
    for h in (0.2, 0.1, 0.05):
        traj = integrate(mm, [1.0], IntegratorConfig(rtol=1e3, atol=1e3, t_end=h, initial_step=h))
        exact = lambertw_mm(h)
        errs.append(abs(traj.y[-1, 0] - exact))
    # Local error of a 4th order method scales like h^5.
    assert errs[0] / errs[1] > 20
    assert errs[1] / errs[2] > 20


def lambertw_mm(t):
    from scipy.special import lambertw
    return float(lambertw(math.exp(1 - t)).real)


def test_tolerance_controls_error():
    errs = []
    for rtol in (1e-4, 1e-6, 1e-8):
        traj = integrate(mm, [1.0], IntegratorConfig(rtol=rtol, atol=rtol * 1e-2, t_end=3.0))
        errs.append(abs(traj.y[-1, 0] - lambertw_mm(3.0)))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-8


def test_stiff_linear_system_few_steps():
    A = np.array([[-1.0, 0.0], [1.0, -1e6]])
    traj = integrate(lambda y: A @ y, [1.0, 0.0], IntegratorConfig(t_end=10.0))
    assert traj.n_steps < 500
    assert traj.y[-1, 0] == pytest.approx(math.exp(-10), rel=1e-6)


def test_stiffness_probe():
    A = np.array([[-1.0, 0.0], [0.0, -1e4]])
    assert stiffness_probe(lambda y: A @ y, np.ones(2), 0.1) == pytest.approx(1e3, rel=1e-4)


def test_deterministic():
    a = integrate(mm, [1.0], IntegratorConfig(t_end=5.0))
    b = integrate(mm, [1.0], IntegratorConfig(t_end=5.0))
    assert np.array_equal(a.t, b.t) and np.array_equal(a.y, b.y)


def test_step_limit():
    with pytest.raises(StepLimitError):
        integrate(decay, [1.0], IntegratorConfig(t_end=100.0, max_steps=3))


def test_non_finite_rhs():
    with pytest.raises(NonFiniteError):
        integrate(lambda y: np.array([np.nan]), [1.0], IntegratorConfig(t_end=1.0))


@pytest.mark.parametrize("kw", [dict(rtol=0), dict(atol=-1), dict(t_end=0), dict(max_steps=0), dict(method="euler")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        IntegratorConfig(**kw)


def test_bad_t_eval():
    with pytest.raises(ValueError):
        integrate(decay, [1.0], IntegratorConfig(t_end=1.0), t_eval=[0.5, 0.2])
    with pytest.raises(ValueError):
        integrate(decay, [1.0], IntegratorConfig(t_end=1.0), t_eval=[0.5, 2.0])
