"""TG -> DG -> MG lipolysis network with DG transacylation.

Species (nondimensional): ``s`` TG, ``q`` DG in units of the DG Michaelis
constant, ``p`` MG and ``f`` fatty acids.  The scaled system reads::

    s' = -m1(s) + V kappa q^2
    q' = L [m1(s) - V (m2(q) + 2 kappa q^2)]
    p' = V (m2(q) + kappa q^2)
    f' = m1(s) + V m2(q)

with ``m1(s) = s / (K + s)`` and ``m2(q) = q / (1 + q)``.

The scalar helpers only use arithmetic operators so they also work on
``fractions.Fraction`` inputs, which the tests use to check the conservation
identities exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .integrator import (
    Event,
    IntegrationError,
    IntegratorConfig,
    Trajectory,
    integrate,
)

# Early stop once both TG and DG are exhausted.
STEADY_STATE_TOL = 1e-10


@dataclass(frozen=True)
class DimensionalParams:
    """Raw kinetic constants and initial concentrations."""

    v1_max: float
    k1_m: float
    v2_max: float
    k2_m: float
    sigma: float
    s0: float
    q0: float = 0.0

    def __post_init__(self):
        for name in ("v1_max", "k1_m", "v2_max", "k2_m", "s0"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be strictly positive, got {value!r}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma!r}")
        if not self.q0 >= 0:
            raise ValueError(f"q0 must be nonnegative, got {self.q0!r}")


@dataclass(frozen=True)
class ModelParams:
    """Dimensionless parameters of the scaled model.

    Attributes:
        K: TG Michaelis constant over initial TG, ``K1 / s0``.
        L: initial TG over DG Michaelis constant, ``s0 / K2``.
        V: ratio of maximal velocities, ``V2 / V1``.
        kappa: transacylation versus DG hydrolysis, ``sigma K2^2 / V2``.
        q0: initial DG in units of ``K2``.
    """

    K: float
    L: float
    V: float
    kappa: float = 0.0
    q0: float = 0.0

    def __post_init__(self):
        for name in ("K", "L", "V"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be strictly positive, got {value!r}")
        if not self.kappa >= 0:
            raise ValueError(f"kappa must be nonnegative, got {self.kappa!r}")
        if not self.q0 >= 0:
            raise ValueError(f"q0 must be nonnegative, got {self.q0!r}")

    def replace(self, **changes) -> "ModelParams":
        values = {k: getattr(self, k) for k in ("K", "L", "V", "kappa", "q0")}
        values.update(changes)
        return ModelParams(**values)

    def as_dict(self) -> dict:
        return {"K": self.K, "L": self.L, "V": self.V, "kappa": self.kappa, "q0": self.q0}


class State(NamedTuple):
    s: float
    q: float
    p: float
    f: float


def nondimensionalize(d: DimensionalParams) -> ModelParams:
    return ModelParams(
        K=d.k1_m / d.s0,
        L=d.s0 / d.k2_m,
        V=d.v2_max / d.v1_max,
        kappa=d.sigma * d.k2_m ** 2 / d.v2_max,
        q0=d.q0 / d.k2_m,
    )


def initial_state(params: ModelParams) -> State:
    return State(1.0, float(params.q0), 0.0, 0.0)


def rate_m1(s, K):
    """TG hydrolysis rate ``s / (K + s)``."""
    return s / (K + s)


def rate_m2(q):
    """DG hydrolysis rate ``q / (1 + q)``."""
    return q / (1 + q)


def rate_d(q, kappa):
    """Total DG processing rate ``m2(q) + 2 kappa q^2``; strictly increasing."""
    return q / (1 + q) + 2 * kappa * q * q


def m1_prime(s, K):
    return K / ((K + s) * (K + s))


def m1_second(s, K):
    return -2 * K / ((K + s) ** 3)


def m2_prime(q):
    return 1 / ((1 + q) * (1 + q))


def d_prime(q, kappa):
    return 4 * kappa * q + 1 / ((1 + q) * (1 + q))


def rhs_full(x: Sequence, params: ModelParams) -> State:
    """Right-hand side of the scaled four-species system."""
    s, q = x[0], x[1]
    K, L, V, kappa = params.K, params.L, params.V, params.kappa
    m1 = s / (K + s)
    m2 = q / (1 + q)
    tq = kappa * q * q
    return State(
        -m1 + V * tq,
        L * (m1 - V * (m2 + 2 * tq)),
        V * (m2 + tq),
        m1 + V * m2,
    )


def transacylation_fraction(q, kappa) -> float:
    """Share of DG processing due to transacylation, ``2kq^2 / d(q)``.

    Defined as 0 at ``q = 0`` (removable singularity).
    """
    if q <= 0:
        return 0.0
    ta = 2 * kappa * q * q
    return ta / (ta + q / (1 + q))


def conserved_quantities(x: Sequence, params: ModelParams):
    """Total glycerol ``s + q/L + p`` and total FA ``3s + 2q/L + p + f``."""
    s, q, p, f = x[0], x[1], x[2], x[3]
    return s + q / params.L + p, 3 * s + 2 * q / params.L + p + f


def conserved_targets(params: ModelParams):
    return 1 + params.q0 / params.L, 3 + 2 * params.q0 / params.L


def equilibrium(params: ModelParams) -> State:
    """Limit state: TG and DG exhausted, ``p -> 1 + q0/L``, ``f -> 2 + q0/L``."""
    r = params.q0 / params.L
    return State(0.0, 0.0, 1.0 + r, 2.0 + r)


def conservation_residuals(y: np.ndarray, params: ModelParams) -> np.ndarray:
    """Relative deviation of both conserved totals along states ``y``.

    Returns an ``(n, 2)`` array.
    """
    y = np.atleast_2d(y)
    g0, a0 = conserved_targets(params)
    glycerol = y[:, 0] + y[:, 1] / params.L + y[:, 2]
    fatty = 3 * y[:, 0] + 2 * y[:, 1] / params.L + y[:, 2] + y[:, 3]
    return np.column_stack([(glycerol - g0) / g0, (fatty - a0) / a0])


def full_vector_field(params: ModelParams):
    """Fast float closure of :func:`rhs_full` for the integrator.

    Negative round-off in ``s`` or ``q`` is clamped to zero before the rates
    are evaluated; :func:`simulate` rejects anything beyond ``10 * atol``.
    """
    K, L, V, kappa = float(params.K), float(params.L), float(params.V), float(params.kappa)

    def rhs(y):
        s = y[0] if y[0] > 0.0 else 0.0
        q = y[1] if y[1] > 0.0 else 0.0
        m1 = s / (K + s)
        m2 = q / (1.0 + q)
        tq = kappa * q * q
        return np.array([-m1 + V * tq, L * (m1 - V * (m2 + 2.0 * tq)), V * (m2 + tq), m1 + V * m2])

    return rhs


def full_jacobian(params: ModelParams):
    K, L, V, kappa = float(params.K), float(params.L), float(params.V), float(params.kappa)

    def jac(y):
        s = y[0] if y[0] > 0.0 else 0.0
        q = y[1] if y[1] > 0.0 else 0.0
        a = K / ((K + s) ** 2)
        b = 1.0 / ((1.0 + q) ** 2)
        return np.array([
            [-a, 2.0 * V * kappa * q, 0.0, 0.0],
            [L * a, -L * V * (b + 4.0 * kappa * q), 0.0, 0.0],
            [0.0, V * (b + 2.0 * kappa * q), 0.0, 0.0],
            [a, V * b, 0.0, 0.0],
        ])

    return jac


def q_rate_event(params: ModelParams, label: str = "q_max") -> Event:
    """Event at the DG maximum (``q'`` crossing zero from above)."""
    rhs = full_vector_field(params)
    return Event(label, lambda y: rhs(y)[1], direction=-1)


def check_nonnegative(traj: Trajectory, atol: float, columns=(0, 1, 2, 3)) -> None:
    """Raise if any species dipped below ``-10 * atol``."""
    if traj.y.size == 0:
        return
    worst = float(np.min(traj.y[:, list(columns)]))
    if worst < -10 * atol:
        i = int(np.argmin(np.min(traj.y[:, list(columns)], axis=1)))
        raise IntegrationError(
            f"negative concentration {worst:.3e} beyond 10*atol", float(traj.t[i]), traj.y[i]
        )


def simulate(
    params: ModelParams,
    cfg: IntegratorConfig | None = None,
    events: Sequence[Event] = (),
    *,
    t_eval=None,
    steady_state_stop: bool = False,
    stop_after_events: bool = False,
) -> Trajectory:
    """Integrate the full scaled model from ``(1, q0, 0, 0)``."""
    cfg = cfg or IntegratorConfig()
    stop = None
    if steady_state_stop:
        def stop(y):
            return y[0] + y[1] < STEADY_STATE_TOL
    traj = integrate(
        full_vector_field(params),
        initial_state(params),
        cfg,
        events,
        t_eval=t_eval,
        jac=full_jacobian(params) if cfg.method == "rodas4" else None,
        stop=stop,
        stop_after_events=stop_after_events,
    )
    check_nonnegative(traj, cfg.atol)
    return traj


class EnvelopeNotCertified(ValueError):
    """The decay-envelope precondition ``q(0) <= qtilde(s_max)`` fails."""


@dataclass(frozen=True)
class DecayEnvelope:
    """Certified exponential decay of the weighted TG/DG content.

    ``alpha * L * s(t) + beta * q(t) <= weighted0 * exp(-c2 * t)`` and
    ``s(t), q(t) <= c1 * exp(-c2 * t)`` for all ``t >= 0``.
    """

    s_max: float
    q_max: float
    alpha: float
    beta: float
    c1: float
    c2: float
    L: float
    weighted0: float

    def weighted(self, s, q):
        return self.alpha * self.L * np.asarray(s) + self.beta * np.asarray(q)

    def bound(self, t):
        return self.weighted0 * np.exp(-self.c2 * np.asarray(t, dtype=float))

    def species_bound(self, t):
        return self.c1 * np.exp(-self.c2 * np.asarray(t, dtype=float))


def decay_envelope(params: ModelParams, alpha: float = 1.0, beta: float = 0.5) -> DecayEnvelope:
    """Exponential decay envelope for ``s`` and ``q`` via a Gronwall argument.

    Raises:
        ValueError: the weights violate ``0 < beta < alpha <= 2 beta``.
        EnvelopeNotCertified: ``q(0)`` lies above the DG nullcline at
            ``s_max`` (or no nullcline value exists there).
    """
    from .qssa import NoRootError, solve_qssa_input

    if not (0 < beta < alpha <= 2 * beta):
        raise ValueError("weights must satisfy 0 < beta < alpha <= 2*beta")
    K, L, V, kappa, q0 = params.K, params.L, params.V, params.kappa, params.q0
    s_max = 1.0 + 2.0 * q0 / (3.0 * L)
    try:
        q_max = solve_qssa_input(rate_m1(s_max, K) / V, kappa)
    except NoRootError as exc:
        raise EnvelopeNotCertified(f"no DG nullcline value at s_max={s_max}") from exc
    if q0 > q_max:
        raise EnvelopeNotCertified(
            f"q(0)={q0} exceeds the nullcline value {q_max} at s_max={s_max}"
        )
    c2 = min((alpha - beta) / (alpha * (K + s_max)), L * V / (1.0 + q_max))
    c1 = max(1.0 + beta * q0 / (alpha * L), alpha * L / beta + q0)
    return DecayEnvelope(
        s_max=s_max,
        q_max=q_max,
        alpha=alpha,
        beta=beta,
        c1=c1,
        c2=c2,
        L=L,
        weighted0=alpha * L + beta * q0,
    )


def mm_time_to_fraction(fraction: float, K: float, rate: float = 1.0) -> float:
    """Time for ``s' = -rate * s/(K+s)`` to fall from 1 to ``fraction``.

    Solves ``K ln s + s = 1 - rate * t``.
    """
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    return (1.0 - fraction - K * math.log(fraction)) / rate
