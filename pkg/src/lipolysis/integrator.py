"""Adaptive initial-value integration with dense output and event location.

Two embedded pairs are provided:

``"rodas4"``
    Hairer & Wanner's L-stable, stiffly accurate Rosenbrock 4(3) method with
    a third-order continuous extension.  This is the default because the DG
    equation relaxes at rate ``L * V * d'(q)``, which is large in exactly the
    parameter regimes where the reduced models are interesting.
``"dopri5"``
    Dormand & Prince explicit 5(4) pair with the usual quartic interpolant,
    for non-stiff runs.

Vector fields are autonomous callables ``rhs(y) -> dy``.
"""
from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import brentq

logger = logging.getLogger(__name__)

VectorField = Callable[[np.ndarray], np.ndarray]

_EPS = np.finfo(float).eps
_SQRT_EPS = math.sqrt(_EPS)

# Rodas4 (transformed W-form coefficients).
_GAMMA = 0.25
_A21 = 1.544
_A31, _A32 = 0.9466785280815826, 0.2557011698983284
_A41, _A42, _A43 = 3.314825187068521, 2.896124015972201, 0.9986419139977817
_A51, _A52, _A53, _A54 = (
    1.221224509226641, 6.019134481288629, 12.53708332932087, -0.6878860361058950,
)
_C21 = -5.6688
_C31, _C32 = -2.430093356833875, -0.2063599157091915
_C41, _C42, _C43 = -0.1073529058151375, -9.594562251023355, -20.47028614809616
_C51, _C52, _C53, _C54 = (
    7.496443313967647, -10.24680431464352, -33.99990352819905, 11.70890893206160,
)
_C61, _C62, _C63, _C64, _C65 = (
    8.083246795921522, -7.981132988064893, -31.52159432874371,
    16.31930543123136, -6.058818238834054,
)
_D2 = (10.12623508344586, -7.487995877610167, -34.80091861555747,
       -7.992771707568823, 1.025137723295662)
_D3 = (-0.6762803392801253, 6.087714651680015, 16.43084320892478,
       24.76722511418386, -6.594389125716872)

# Dormand-Prince 5(4).
_DP_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_DP_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_DP_E = np.array([-71 / 57600, 0, 71 / 16695, -71 / 1920, 17253 / 339200,
                  -22 / 525, 1 / 40])
_DP_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608,
     -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933,
     87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304,
     -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408,
     701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883,
     -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

METHODS = ("rodas4", "dopri5")
# Order of the embedded error estimate, used in the step-size exponent.
_ERROR_ORDER = {"rodas4": 3, "dopri5": 4}


class IntegrationError(RuntimeError):
    """Integration could not be completed.

    ``t`` and ``y`` hold the last accepted time and state.
    """

    def __init__(self, message: str, t: float, y: np.ndarray):
        super().__init__(f"{message} (t={t!r})")
        self.t = t
        self.y = np.array(y, copy=True)


class StepLimitError(IntegrationError):
    pass


class StepSizeUnderflowError(IntegrationError):
    pass


class NonFiniteError(IntegrationError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-8
    atol: float = 1e-10
    t_end: float = 100.0
    max_steps: int = 200_000
    initial_step: float | None = None
    method: str = "rodas4"

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.initial_step is not None and not self.initial_step > 0:
            raise ValueError("initial_step must be positive")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")


@dataclass(frozen=True)
class Event:
    """Zero crossing of ``target(y)`` to be located during integration.

    ``direction`` is +1 for upward crossings, -1 for downward crossings and
    0 for both.  A terminal event stops the integration at its first
    occurrence.
    """

    label: str
    target: Callable[[np.ndarray], float]
    direction: int = 0
    terminal: bool = False


class EventRecord(NamedTuple):
    label: str
    time: float
    state: np.ndarray


class _RodasInterp:
    __slots__ = ("t0", "h", "y0", "y1", "d2", "d3")

    def __init__(self, t0, h, y0, y1, d2, d3):
        self.t0, self.h, self.y0, self.y1, self.d2, self.d3 = t0, h, y0, y1, d2, d3

    def __call__(self, t: float) -> np.ndarray:
        s = (t - self.t0) / self.h
        s1 = 1.0 - s
        return self.y0 * s1 + s * (self.y1 + s1 * (self.d2 + s * self.d3))


class _DopriInterp:
    __slots__ = ("t0", "h", "y0", "Q")

    def __init__(self, t0, h, y0, Q):
        self.t0, self.h, self.y0, self.Q = t0, h, y0, Q

    def __call__(self, t: float) -> np.ndarray:
        x = (t - self.t0) / self.h
        return self.y0 + self.h * (self.Q @ np.array([x, x * x, x ** 3, x ** 4]))


@dataclass
class Trajectory:
    """Output of :func:`integrate`.

    ``t`` is strictly increasing and ``y[i]`` is the state at ``t[i]``.
    Calling the trajectory evaluates the dense output anywhere in
    ``[t[0], t[-1]]``.
    """

    t: np.ndarray
    y: np.ndarray
    events: list[EventRecord] = field(default_factory=list)
    status: str = "t_end"
    n_steps: int = 0
    n_rejected: int = 0
    _breaks: list = field(default_factory=list, repr=False)
    _interps: list = field(default_factory=list, repr=False)

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        if t_arr.ndim == 0:
            return self._eval(float(t_arr))
        return np.array([self._eval(float(ti)) for ti in t_arr])

    def _eval(self, t: float) -> np.ndarray:
        if not self._interps:
            raise ValueError("trajectory has no dense output")
        lo, hi = self.t[0], self.t[-1]
        tol = 1e-12 * max(1.0, abs(hi))
        if t < lo - tol or t > hi + tol:
            raise ValueError(f"t={t} outside integrated interval [{lo}, {hi}]")
        i = bisect.bisect_right(self._breaks, t) - 1
        i = min(max(i, 0), len(self._interps) - 1)
        return self._interps[i](t)

    @property
    def t_final(self) -> float:
        return float(self.t[-1])

    def event(self, label: str) -> EventRecord | None:
        """First recorded occurrence of ``label``, or None."""
        for rec in self.events:
            if rec.label == label:
                return rec
        return None

    def event_time(self, label: str) -> float | None:
        rec = self.event(label)
        return None if rec is None else rec.time

    # Convenience views for the four-species lipolysis state.
    @property
    def s(self) -> np.ndarray:
        return self.y[:, 0]

    @property
    def q(self) -> np.ndarray:
        return self.y[:, 1]

    @property
    def p(self) -> np.ndarray:
        return self.y[:, 2]

    @property
    def f(self) -> np.ndarray:
        return self.y[:, 3]


def fd_jacobian(rhs: VectorField, y: np.ndarray, fy: np.ndarray | None = None) -> np.ndarray:
    """Forward-difference Jacobian of ``rhs`` at ``y``."""
    y = np.asarray(y, dtype=float)
    if fy is None:
        fy = np.asarray(rhs(y), dtype=float)
    n = y.size
    J = np.empty((n, n))
    for j in range(n):
        delta = _SQRT_EPS * max(1.0, abs(y[j]))
        yp = y.copy()
        yp[j] += delta
        J[:, j] = (np.asarray(rhs(yp), dtype=float) - fy) / delta
    return J


def stiffness_probe(rhs: VectorField, x, h: float) -> float:
    """Dominant local Jacobian eigenvalue magnitude times ``h``.

    Advisory only: values well above ~3 mean an explicit method would be
    step-size limited by stability rather than accuracy.
    """
    x = np.asarray(x, dtype=float)
    J = fd_jacobian(rhs, x)
    eig = np.linalg.eigvals(J)
    return float(np.max(np.abs(eig)) * h) if eig.size else 0.0


def _rms(v: np.ndarray) -> float:
    return math.sqrt(float(np.dot(v, v)) / v.size)


def _initial_step(rhs, y0, f0, order, rtol, atol, t_span) -> float:
    scale = atol + rtol * np.abs(y0)
    d0 = _rms(y0 / scale)
    d1 = _rms(f0 / scale)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, t_span)
    f1 = np.asarray(rhs(y0 + h0 * f0), dtype=float)
    d2 = _rms((f1 - f0) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / (order + 1))
    return min(100 * h0, h1, t_span)


def _rodas_step(rhs, y, fy, J, h):
    n = y.size
    Einv = np.linalg.inv(np.eye(n) * (1.0 / (h * _GAMMA)) - J)
    k1 = Einv @ fy
    k2 = Einv @ (rhs(y + _A21 * k1) + (_C21 / h) * k1)
    k3 = Einv @ (rhs(y + _A31 * k1 + _A32 * k2) + (_C31 * k1 + _C32 * k2) / h)
    k4 = Einv @ (rhs(y + _A41 * k1 + _A42 * k2 + _A43 * k3)
                 + (_C41 * k1 + _C42 * k2 + _C43 * k3) / h)
    y5 = y + _A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4
    k5 = Einv @ (rhs(y5) + (_C51 * k1 + _C52 * k2 + _C53 * k3 + _C54 * k4) / h)
    y6 = y5 + k5
    k6 = Einv @ (rhs(y6) + (_C61 * k1 + _C62 * k2 + _C63 * k3 + _C64 * k4 + _C65 * k5) / h)
    ynew = y6 + k6
    d2 = _D2[0] * k1 + _D2[1] * k2 + _D2[2] * k3 + _D2[3] * k4 + _D2[4] * k5
    d3 = _D3[0] * k1 + _D3[1] * k2 + _D3[2] * k3 + _D3[3] * k4 + _D3[4] * k5
    return ynew, k6, (d2, d3)


def _dopri_step(rhs, y, fy, h):
    K = np.empty((7, y.size))
    K[0] = fy
    for i in range(1, 6):
        dy = np.dot(_DP_A[i], K[:i]) * h
        K[i] = rhs(y + dy)
    ynew = y + h * np.dot(_DP_B, K[:6])
    K[6] = rhs(ynew)
    err = h * np.dot(_DP_E, K)
    return ynew, err, K


def _crossed(g0: float, g1: float, direction: int) -> bool:
    up = g0 < 0.0 <= g1
    down = g0 > 0.0 >= g1
    if direction > 0:
        return up
    if direction < 0:
        return down
    return up or down


def _locate(target, interp, t0, t1, g0, g1) -> float:
    def g(tt):
        return float(target(interp(tt)))

    ga, gb = g(t0), g(t1)
    if ga == 0.0:
        return t0
    if gb == 0.0 or np.sign(ga) == np.sign(gb):
        # Rounding in the interpolant can disagree with the step endpoint
        # values in the last bit; fall back to the endpoint closest to zero.
        return t1 if abs(g1) <= abs(g0) else t0
    return brentq(g, t0, t1, xtol=1e-13, rtol=4 * _EPS, maxiter=200)


def integrate(
    rhs: VectorField,
    y0,
    cfg: IntegratorConfig | None = None,
    events: Sequence[Event] = (),
    *,
    t_eval=None,
    jac: Callable[[np.ndarray], np.ndarray] | None = None,
    stop: Callable[[np.ndarray], bool] | None = None,
    stop_after_events: bool = False,
) -> Trajectory:
    """Integrate ``y' = rhs(y)`` from ``t = 0`` to ``cfg.t_end``.

    Args:
        rhs: autonomous vector field.
        y0: initial state.
        cfg: tolerances, end time and method.
        events: zero crossings to locate on the dense output.
        t_eval: optional output times; by default every accepted step is
            reported.
        jac: optional analytic Jacobian (Rosenbrock only); finite
            differences are used otherwise.
        stop: optional predicate on the state.  Integration ends early once
            it returns True and every event has fired at least once.
        stop_after_events: end as soon as every event has fired once.

    Raises:
        StepLimitError: ``cfg.max_steps`` accepted+rejected steps exhausted.
        StepSizeUnderflowError: the step size fell below round-off level.
        NonFiniteError: the vector field returned NaN or Inf.
    """
    cfg = cfg or IntegratorConfig()
    y = np.array(y0, dtype=float).ravel()
    if not np.all(np.isfinite(y)):
        raise NonFiniteError("non-finite initial state", 0.0, y)
    t_end = float(cfg.t_end)
    method = cfg.method
    rtol, atol = cfg.rtol, cfg.atol
    exponent = -1.0 / (_ERROR_ORDER[method] + 1)

    def f(v):
        return np.asarray(rhs(v), dtype=float)

    fy = f(y)
    if not np.all(np.isfinite(fy)):
        raise NonFiniteError("vector field returned non-finite values", 0.0, y)

    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=float)
        if t_eval.ndim != 1 or np.any(np.diff(t_eval) <= 0):
            raise ValueError("t_eval must be strictly increasing")
        if t_eval[0] < 0 or t_eval[-1] > t_end * (1 + 1e-12):
            raise ValueError("t_eval must lie within [0, t_end]")

    out_t: list[float] = []
    out_y: list[np.ndarray] = []
    next_eval = 0
    if t_eval is None:
        out_t.append(0.0)
        out_y.append(y.copy())
    elif t_eval[0] == 0.0:
        out_t.append(0.0)
        out_y.append(y.copy())
        next_eval = 1

    g_prev = [float(ev.target(y)) for ev in events]
    fired = [False] * len(events)
    records: list[EventRecord] = []
    breaks: list[float] = []
    interps: list = []

    t = 0.0
    h = cfg.initial_step or _initial_step(f, y, fy, _ERROR_ORDER[method], rtol, atol, t_end)
    J = None
    n_steps = n_rejected = 0
    status = "t_end"
    done = False

    while not done:
        if n_steps + n_rejected >= cfg.max_steps:
            raise StepLimitError(f"step limit of {cfg.max_steps} exhausted", t, y)
        remaining = t_end - t
        if remaining <= 10 * _EPS * max(1.0, abs(t)):
            break
        h = min(h, remaining)
        last = h >= remaining
        if h <= 10 * _EPS * max(1.0, abs(t)):
            raise StepSizeUnderflowError("step size underflow", t, y)

        if method == "rodas4":
            if J is None:
                J = np.asarray(jac(y), dtype=float) if jac is not None else fd_jacobian(f, y, fy)
            ynew, err, dense = _rodas_step(f, y, fy, J, h)
        else:
            ynew, err, K = _dopri_step(f, y, fy, h)

        if not (np.all(np.isfinite(ynew)) and np.all(np.isfinite(err))):
            n_rejected += 1
            h *= 0.25
            continue

        scale = atol + rtol * np.maximum(np.abs(y), np.abs(ynew))
        err_norm = _rms(err / scale)
        if err_norm > 1.0:
            n_rejected += 1
            h *= max(0.2, 0.9 * err_norm ** exponent)
            continue

        t_new = t + h if not last else t_end
        if method == "rodas4":
            interp = _RodasInterp(t, h, y, ynew, dense[0], dense[1])
            fnew = f(ynew)
        else:
            fnew = K[6]
            interp = _DopriInterp(t, h, y, K.T @ _DP_P)
        if not np.all(np.isfinite(fnew)):
            raise NonFiniteError("vector field returned non-finite values", t_new, ynew)
        n_steps += 1
        breaks.append(t)
        interps.append(interp)

        # Event location on the dense output of the accepted step.
        hits = []
        for i, ev in enumerate(events):
            g1 = float(ev.target(ynew))
            if _crossed(g_prev[i], g1, ev.direction):
                hits.append((_locate(ev.target, interp, t, t_new, g_prev[i], g1), i))
            g_prev[i] = g1
        hits.sort()
        t_stop = None
        for t_hit, i in hits:
            ev = events[i]
            records.append(EventRecord(ev.label, t_hit, interp(t_hit)))
            fired[i] = True
            if ev.terminal:
                t_stop = t_hit
                status = "event"
                break
            if stop_after_events and all(fired):
                t_stop = t_hit
                status = "events_resolved"
                break

        t_seg_end = t_new if t_stop is None else t_stop
        if t_eval is None:
            if t_seg_end > out_t[-1]:
                out_t.append(t_seg_end)
                out_y.append(ynew.copy() if t_stop is None else interp(t_stop))
        else:
            while next_eval < t_eval.size and t_eval[next_eval] <= t_seg_end * (1 + 1e-15):
                te = t_eval[next_eval]
                out_t.append(float(te))
                out_y.append(ynew.copy() if te == t_new else interp(te))
                next_eval += 1

        if t_stop is not None:
            done = True
            t = t_stop
            y = interp(t_stop)
            break

        t, y, fy = t_new, ynew, fnew
        J = None
        if stop is not None and all(fired) and stop(y):
            status = "steady_state"
            break
        h *= min(5.0, max(0.2, 0.9 * err_norm ** exponent)) if err_norm > 0 else 5.0

    if t_eval is not None and status == "t_end":
        # Round-off can leave the final requested time just beyond t.
        while next_eval < t_eval.size and interps:
            out_t.append(float(t_eval[next_eval]))
            out_y.append(interps[-1](min(t_eval[next_eval], t)))
            next_eval += 1

    traj_y = np.array(out_y) if out_y else np.empty((0, y.size))
    return Trajectory(
        t=np.array(out_t),
        y=traj_y,
        events=records,
        status=status,
        n_steps=n_steps,
        n_rejected=n_rejected,
        _breaks=breaks,
        _interps=interps,
    )
