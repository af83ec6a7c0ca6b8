"""Quasi-steady-state reduction of the DG equation.

The QSSA level ``qtilde(s)`` is the unique nonnegative root of
``2 kappa q^2 + q/(1+q) = m1(s)/V``.  Around it this module provides the
explicit small-``q`` approximation, the perturbation ``pi = q - qtilde``,
initial-layer timescale estimates, and reduced models for the three regimes
``L``, ``V`` or ``kappa`` large.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .integrator import IntegrationError, IntegratorConfig, Trajectory, integrate
from .kinetics import (
    ModelParams,
    d_prime,
    full_vector_field,
    m1_prime,
    m1_second,
    q_rate_event,
    rate_d,
    rate_m1,
    simulate,
)

REGIMES = ("L", "V", "kappa")
MODELS = ("qssa0-L", "qssa1-L", "qssa1-V", "qssa1-kappa")


class NoRootError(ValueError):
    """No nonnegative QSSA level exists (``kappa = 0`` and ``m1/V >= 1``)."""


class DiscriminantError(ValueError):
    """The explicit approximation is not real for this input."""


class MissingEventError(ValueError):
    """A trajectory lacks the DG-maximum event needed for the analysis."""


@dataclass(frozen=True)
class QssaPoint:
    q_tilde: float
    input_I: float
    method: str  # "exact-root" or "explicit-approx"
    valid_half: bool


def qssa_input(s, params: ModelParams) -> float:
    """QSSA source term ``I = m1(s) / V``."""
    return rate_m1(s, params.K) / params.V


def solve_qssa_input(I: float, kappa: float) -> float:
    """Nonnegative root of ``2 kappa q^2 + q/(1+q) = I``.

    Monotone bracketing (doubling the upper end until ``d`` exceeds ``I``)
    followed by bracket-safeguarded Newton iteration.
    """
    if I < 0:
        raise ValueError(f"QSSA input must be nonnegative, got {I!r}")
    if I == 0:
        return 0.0
    if kappa == 0 and I >= 1:
        raise NoRootError(f"no QSSA level for kappa=0 and I={I} >= 1")

    lo, hi = 0.0, 1.0
    while rate_d(hi, kappa) <= I:
        lo, hi = hi, 2.0 * hi
    disc = 1.0 + 4.0 * I * (2.0 * kappa - 1.0)
    x = 2.0 * I / (math.sqrt(disc) + 1.0) if disc > 0 else 0.5 * (lo + hi)
    if not lo < x < hi:
        x = 0.5 * (lo + hi)

    for _ in range(200):
        fx = rate_d(x, kappa) - I
        if fx == 0.0:
            return x
        if fx < 0:
            lo = x
        else:
            hi = x
        step = fx / d_prime(x, kappa)
        x_new = x - step
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
            step = x - x_new
        if abs(step) <= 2.0 * np.finfo(float).eps * x_new:
            x = x_new
            break
        x = x_new
    return x


def solve_qssa(s, params: ModelParams) -> QssaPoint:
    """Exact QSSA level at TG concentration ``s``."""
    if s < 0:
        raise ValueError(f"s must be nonnegative, got {s!r}")
    I = qssa_input(s, params)
    q = solve_qssa_input(I, params.kappa)
    return QssaPoint(q, I, "exact-root", q <= 0.5)


def qssa_curve(s, params: ModelParams) -> np.ndarray:
    """Vectorised :func:`solve_qssa` returning only the levels."""
    s = np.asarray(s, dtype=float)
    out = np.empty(s.shape)
    for idx, si in np.ndenumerate(s):
        out[idx] = solve_qssa_input(rate_m1(max(si, 0.0), params.K) / params.V, params.kappa)
    return out


def qssa_approx(I: float, kappa: float) -> QssaPoint:
    """Explicit small-level approximation ``2I / (sqrt(1 + 4I(2k-1)) + 1)``."""
    if not I > 0:
        raise ValueError(f"I must be positive, got {I!r}")
    disc = 1.0 + 4.0 * I * (2.0 * kappa - 1.0)
    if disc < 0:
        raise DiscriminantError(
            f"approximation not real: 1 + 4I(2kappa-1) = {disc} < 0 (I={I}, kappa={kappa})"
        )
    q = 2.0 * I / (math.sqrt(disc) + 1.0)
    return QssaPoint(q, I, "explicit-approx", q <= 0.5)


def vkappa_condition(V: float, kappa: float) -> bool:
    """``V >= 4 / (1 + 2 kappa)``, which guarantees ``qtilde <= 1/2``."""
    return V * (1.0 + 2.0 * kappa) >= 4.0


# -- perturbation around the QSSA level ---------------------------------


@dataclass
class PerturbationSeries:
    t: np.ndarray
    q: np.ndarray
    q_tilde: np.ndarray
    pi: np.ndarray
    q_dot: np.ndarray

    def sign_agreement(self, tol: float = 0.0):
        """Check ``sign(q') == -sign(pi)`` at interior output points.

        Returns ``(fraction, n_unexplained)``: the fraction of interior
        points where the identity holds strictly, and the number of failing
        points where neither ``|pi|`` nor ``|q'|`` is within ``tol`` of zero.
        """
        pi, qd = self.pi[1:-1], self.q_dot[1:-1]
        if pi.size == 0:
            return 1.0, 0
        ok = np.sign(qd) == -np.sign(pi)
        near_zero = (np.abs(pi) <= tol) | (np.abs(qd) <= tol)
        return float(np.mean(ok)), int(np.sum(~ok & ~near_zero))


def perturbation(traj: Trajectory, params: ModelParams) -> PerturbationSeries:
    """``pi(t) = q(t) - qtilde(s(t))`` along a full-system trajectory."""
    s = np.clip(traj.y[:, 0], 0.0, None)
    q = traj.y[:, 1]
    qt = qssa_curve(s, params)
    rhs = full_vector_field(params)
    qdot = np.array([rhs(y)[1] for y in traj.y])
    return PerturbationSeries(traj.t.copy(), q.copy(), qt, q - qt, qdot)


# -- initial-layer timescales --------------------------------------------


@dataclass(frozen=True)
class TimescaleReport:
    t1: float
    t2: float
    t3: float
    t_estimate: float
    t_upper_bound: float
    t90: float
    t90_short: float
    percentile: float
    q_tilde_0: float
    q_tilde_m: float
    s_m: float
    t_m: float
    theta_0: float
    theta_m: float
    psi: float
    condition_full: bool
    condition_simple: bool
    kappa_bound: float
    v_bound: float
    condition_explicit: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def theta(q_tilde: float, s: float, params: ModelParams) -> float:
    """``V qtilde d'(qtilde) / m1(s)`` (lies in ``[1/(1+qtilde), 2]``)."""
    return params.V * q_tilde * d_prime(q_tilde, params.kappa) / rate_m1(s, params.K)


def reference_decay_time(K: float, percentile: float = 90.0):
    """Time for ``s' = -(3/4) m1(s)`` to reach ``percentile``% of ``s(0)``.

    Returns ``(exact, shorthand)`` where the shorthand linearises the
    logarithm, giving ``(2/15)(1+K)`` at 90%.
    """
    x = percentile / 100.0
    if not 0 < x < 1:
        raise ValueError("percentile must lie in (0, 100)")
    exact = (4.0 / 3.0) * (1.0 - x + K * math.log(1.0 / x))
    short = (4.0 / 3.0) * (1.0 - x) * (1.0 + K)
    return exact, short


def timescales(
    params: ModelParams,
    traj: Trajectory | None = None,
    cfg: IntegratorConfig | None = None,
    percentile: float = 90.0,
) -> TimescaleReport:
    """Initial-layer duration estimate and QSSA validity conditions.

    ``traj`` must carry a ``"q_max"`` event; when omitted the full system
    is integrated with that event attached.
    """
    if traj is None:
        cfg = cfg or IntegratorConfig(t_end=50.0)
        traj = simulate(params, cfg, [q_rate_event(params)], stop_after_events=True)
    rec = traj.event("q_max")
    if rec is None:
        raise MissingEventError("trajectory has no 'q_max' event (DG maximum not reached)")
    K, L, V, kappa = params.K, params.L, params.V, params.kappa
    t_m = rec.time
    s_m = float(rec.state[0])
    q_m = float(rec.state[1])
    q_0 = solve_qssa_input(rate_m1(1.0, K) / V, kappa)

    theta_0 = theta(q_0, 1.0, params)
    theta_m = theta(q_m, s_m, params)
    m1_m = rate_m1(s_m, K)
    psi = (m1_m - V * kappa * q_m * q_m) / m1_m

    t1 = 2.0 * (K + 1.0) * q_m / L
    t2 = (2.0 * (K + 1.0) ** 2 / K) * (q_m / q_0) * theta_0
    t3 = (2.0 * (K + s_m) ** 2 / K) * (theta_m / psi)
    t_est = 1.0 / (1.0 / t1 + 1.0 / t2 + 1.0 / t3)
    t_bound = 2.0 * (K + 1.0) ** 2 / ((L / q_m) * (K + 1.0) + 0.75 * K)

    t_ref, t_ref_short = reference_decay_time(K, percentile)
    # 15 at the 90% reference time.
    ratio = 2.0 / ((4.0 / 3.0) * (1.0 - percentile / 100.0))
    condition_full = L / q_m >= ratio - 0.75 * K / (K + 1.0)
    condition_simple = q_m <= L / ratio

    kappa_bound = (ratio / (2.0 * L)) * (ratio / (L * V) - 1.0 / (1.0 + L / ratio))
    v_bound = 1.0 / (2.0 * kappa * L * L / ratio ** 2 + 1.0 / (1.0 + ratio / L))
    condition_explicit = kappa >= kappa_bound or V >= v_bound

    return TimescaleReport(
        t1=t1, t2=t2, t3=t3, t_estimate=t_est, t_upper_bound=t_bound,
        t90=t_ref, t90_short=t_ref_short, percentile=percentile,
        q_tilde_0=q_0, q_tilde_m=q_m, s_m=s_m, t_m=t_m,
        theta_0=theta_0, theta_m=theta_m, psi=psi,
        condition_full=bool(condition_full), condition_simple=bool(condition_simple),
        kappa_bound=kappa_bound, v_bound=v_bound,
        condition_explicit=bool(condition_explicit),
    )


# -- reduced models ------------------------------------------------------


def q_correction_L(s: float, q_tilde: float, params: ModelParams) -> float:
    """First-order correction ``q1 = -m1'(s)(-m1 + V k qt^2) / (V d'(qt))^2``."""
    V, kappa = params.V, params.kappa
    vd = V * d_prime(q_tilde, kappa)
    return -m1_prime(s, params.K) * (-rate_m1(s, params.K) + V * kappa * q_tilde ** 2) / (vd * vd)


def rhs_reduced_L(params: ModelParams, order: int = 0, literal: bool = False) -> Callable:
    """Reduced ``(s, p, f)`` flow for ``L`` large, with ``eps = 1/L``.

    At first order the ``s`` equation carries the prefactor
    ``1 - 2 eps V kappa qt m1' / (V d')^2``, the consistent expansion of
    ``V kappa q^2``.  ``literal=True`` drops the ``V kappa`` factor; the
    two forms coincide when ``V kappa = 1``.
    """
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    K, V, kappa = params.K, params.V, params.kappa
    eps = 1.0 / params.L

    def rhs(y):
        s = y[0] if y[0] > 0.0 else 0.0
        m1 = s / (K + s)
        qt = solve_qssa_input(m1 / V, kappa)
        m2 = qt / (1.0 + qt)
        source = -m1 + V * kappa * qt * qt
        if order == 0:
            return np.array([source, V * (m2 + kappa * qt * qt), m1 + V * m2])
        m1p = K / ((K + s) * (K + s))
        m2p = 1.0 / ((1.0 + qt) * (1.0 + qt))
        vd = V * (4.0 * kappa * qt + m2p)
        q1 = -m1p * source / (vd * vd)
        weight = 1.0 if literal else V * kappa
        sdot = (1.0 - 2.0 * eps * weight * qt * m1p / (vd * vd)) * source
        pdot = V * kappa * qt * qt + V * m2 + eps * V * (2.0 * kappa * qt + m2p) * q1
        fdot = m1 + V * m2 + eps * V * m2p * q1
        return np.array([sdot, pdot, fdot])

    return rhs


def rhs_reduced_V(params: ModelParams) -> Callable:
    """First-order reduced ``(s, p, f)`` flow for ``V`` large, ``eps = 1/V``."""
    K, L, kappa = params.K, params.L, params.kappa
    eps = 1.0 / params.V

    def rhs(y):
        s = y[0] if y[0] > 0.0 else 0.0
        m1 = s / (K + s)
        m1p = K / ((K + s) * (K + s))
        corr = eps * m1p * m1 / L
        ta = eps * kappa * m1 * m1
        return np.array([-m1 + ta, m1 + corr - ta, 2.0 * m1 + corr - 2.0 * ta])

    return rhs


def rhs_reduced_kappa(params: ModelParams) -> Callable:
    """First-order reduced ``(s, p, f)`` flow for ``kappa`` large, ``eps = 1/sqrt(kappa)``."""
    if not params.kappa > 0:
        raise ValueError("kappa regime requires kappa > 0")
    K, L, V = params.K, params.L, params.V
    eps = 1.0 / math.sqrt(params.kappa)

    def rhs(y):
        s = y[0] if y[0] > 0.0 else 0.0
        m1 = s / (K + s)
        m1p = K / ((K + s) * (K + s))
        a = eps * math.sqrt(V * m1 / 8.0)
        b = eps * (m1p / (8.0 * L)) * math.sqrt(m1 / (2.0 * V))
        return np.array([-0.5 * m1 - a + b, 0.5 * m1 + a + b, m1 + eps * math.sqrt(V * m1 / 2.0)])

    return rhs


def expansion_terms_V(s, params: ModelParams):
    """Terms ``q1, q2, q3`` of the large-``V`` expansion of ``q``."""
    s = np.asarray(s, dtype=float)
    K, L, V, k = params.K, params.L, params.V, params.kappa
    m1 = rate_m1(s, K)
    m1p = m1_prime(s, K)
    m1pp = m1_second(s, K)
    q1 = m1 / V
    q2 = (m1 / V ** 2) * (-(2 * k - 1) * m1 + m1p / L)
    q3 = (m1 / V ** 3) * (
        (4 - 9 * k) / L * m1p * m1
        + (2 * (2 * k - 1) ** 2 - 1) * m1 ** 2
        + (m1pp * m1 + m1p ** 2) / L ** 2
    )
    return q1, q2, q3


def expansion_q_V(s, params: ModelParams, order: int = 3):
    """Partial sum of the large-``V`` expansion of ``q`` up to ``order`` (1-3)."""
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    return sum(expansion_terms_V(s, params)[:order])


def expansion_terms_kappa(s, params: ModelParams):
    """Terms ``q1, q2`` of the large-``kappa`` expansion of ``q``."""
    if not params.kappa > 0:
        raise ValueError("kappa regime requires kappa > 0")
    s = np.asarray(s, dtype=float)
    K, L, V, k = params.K, params.L, params.V, params.kappa
    m1 = rate_m1(s, K)
    q1 = np.sqrt(m1 / (2 * V)) / np.sqrt(k)
    q2 = (m1_prime(s, K) / (16 * L * V) - 0.25) / k
    return q1, q2


def expansion_q_kappa(s, params: ModelParams, order: int = 2):
    """Partial sum of the large-``kappa`` expansion of ``q`` up to ``order`` (1-2)."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    return sum(expansion_terms_kappa(s, params)[:order])


def q_first_order_L(s, params: ModelParams):
    """``qtilde(s) + q1(s) / L`` along an array of TG values."""
    s = np.asarray(s, dtype=float)
    out = np.empty(s.shape)
    for idx, si in np.ndenumerate(s):
        si = max(si, 0.0)
        qt = solve_qssa_input(rate_m1(si, params.K) / params.V, params.kappa)
        out[idx] = qt + q_correction_L(si, qt, params) / params.L
    return out


@dataclass(frozen=True)
class ReducedModel:
    regime: str
    order: int
    epsilon: float
    literal: bool = False

    @classmethod
    def from_name(cls, name: str, params: ModelParams, literal: bool = False) -> "ReducedModel":
        table = {
            "qssa0-L": ("L", 0),
            "qssa1-L": ("L", 1),
            "qssa1-V": ("V", 1),
            "qssa1-kappa": ("kappa", 1),
        }
        if name not in table:
            raise ValueError(f"unknown reduced model {name!r}; expected one of {MODELS}")
        regime, order = table[name]
        return cls(regime, order, regime_epsilon(regime, params), literal)

    def vector_field(self, params: ModelParams) -> Callable:
        if self.regime == "L":
            return rhs_reduced_L(params, self.order, self.literal)
        if self.regime == "V":
            return rhs_reduced_V(params)
        return rhs_reduced_kappa(params)

    def reconstruct_q(self, s, params: ModelParams, expansion_order: int | None = None):
        """Observable ``q`` rebuilt from the reduced ``s``."""
        if self.regime == "L":
            if self.order == 0:
                return qssa_curve(np.clip(s, 0.0, None), params)
            return q_first_order_L(s, params)
        s = np.clip(np.asarray(s, dtype=float), 0.0, None)
        if self.regime == "V":
            return expansion_q_V(s, params, expansion_order or 3)
        return expansion_q_kappa(s, params, expansion_order or 2)


def regime_epsilon(regime: str, params: ModelParams) -> float:
    if regime == "L":
        return 1.0 / params.L
    if regime == "V":
        return 1.0 / params.V
    if regime == "kappa":
        if not params.kappa > 0:
            raise ValueError("kappa regime requires kappa > 0")
        return 1.0 / math.sqrt(params.kappa)
    raise ValueError(f"unknown regime {regime!r}")


class _ReconstructedInterp:
    __slots__ = ("inner", "qfun")

    def __init__(self, inner, qfun):
        self.inner, self.qfun = inner, qfun

    def __call__(self, t):
        s, p, f = self.inner(t)
        return np.array([s, float(self.qfun(s)), p, f])


def simulate_reduced(
    params: ModelParams,
    model: str | ReducedModel,
    cfg: IntegratorConfig | None = None,
    *,
    t_eval=None,
    expansion_order: int | None = None,
) -> Trajectory:
    """Integrate a reduced model and return ``(s, q, p, f)`` columns.

    ``q`` is reconstructed from ``s`` after integration; the reduced flow
    itself only carries ``(s, p, f)``.
    """
    cfg = cfg or IntegratorConfig()
    if isinstance(model, str):
        model = ReducedModel.from_name(model, params)
    rhs = model.vector_field(params)
    inner = integrate(rhs, [1.0, 0.0, 0.0], cfg, t_eval=t_eval)
    if inner.y.size and float(np.min(inner.y[:, 0])) < -10 * cfg.atol:
        raise IntegrationError("negative TG in reduced model", float(inner.t[-1]), inner.y[-1])
    q = model.reconstruct_q(inner.y[:, 0], params, expansion_order)

    def qfun(s):
        return model.reconstruct_q(np.array([s]), params, expansion_order)[0]

    y = np.column_stack([inner.y[:, 0], q, inner.y[:, 1], inner.y[:, 2]])
    return Trajectory(
        t=inner.t,
        y=y,
        events=inner.events,
        status=inner.status,
        n_steps=inner.n_steps,
        n_rejected=inner.n_rejected,
        _breaks=inner._breaks,
        _interps=[_ReconstructedInterp(it, qfun) for it in inner._interps],
    )


# -- comparison of expansions against the full system --------------------


@dataclass(frozen=True)
class ExpansionError:
    regime: str
    order: int
    sup_error: float
    t_m: float
    window: tuple


def expansion_error(
    params: ModelParams,
    regime: str,
    order: int,
    *,
    t_end: float = 10.0,
    window_factor: float = 3.0,
    n_points: int = 4001,
    cfg: IntegratorConfig | None = None,
) -> ExpansionError:
    """Sup-norm gap between full-system ``q`` and an expansion of it.

    The expansion is evaluated along the full-system ``s(t)`` on
    ``[window_factor * t_m, t_end]``, where ``t_m`` is the time of maximal
    DG (end of the initial layer).
    """
    cfg = cfg or IntegratorConfig(t_end=t_end)
    if cfg.t_end != t_end:
        cfg = IntegratorConfig(cfg.rtol, cfg.atol, t_end, cfg.max_steps, cfg.initial_step, cfg.method)
    traj = simulate(params, cfg, [q_rate_event(params)])
    t_m = traj.event_time("q_max")
    if t_m is None:
        raise MissingEventError("DG maximum not reached before t_end")
    t0 = window_factor * t_m
    grid = np.linspace(t0, t_end, n_points)
    y = traj(grid)
    s = np.clip(y[:, 0], 0.0, None)
    if regime == "V":
        approx = expansion_q_V(s, params, order)
    elif regime == "kappa":
        approx = expansion_q_kappa(s, params, order)
    elif regime == "L":
        approx = qssa_curve(s, params) if order == 0 else q_first_order_L(s, params)
    else:
        raise ValueError(f"unknown regime {regime!r}")
    return ExpansionError(regime, order, float(np.max(np.abs(y[:, 1] - approx))), t_m, (t0, t_end))
