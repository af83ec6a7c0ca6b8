"""Forward sensitivities with respect to the transacylation rate ``kappa``."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .integrator import IntegratorConfig, integrate
from .kinetics import ModelParams, initial_state, m1_prime, m2_prime, simulate
from .qssa import solve_qssa_input

ORACLE_CFG = IntegratorConfig(rtol=1e-12, atol=1e-14, t_end=10.0)


class SensitivityState(NamedTuple):
    ds_dk: float
    dq_dk: float
    dp_dk: float
    df_dk: float


def rhs_sensitivity_full(x, v, params: ModelParams) -> SensitivityState:
    """Time derivative of the ``kappa``-sensitivities along the full flow."""
    s, q = x[0], x[1]
    ds, dq = v[0], v[1]
    K, L, V, kappa = params.K, params.L, params.V, params.kappa
    m1p = m1_prime(s, K)
    m2p = m2_prime(q)
    qq = q * q
    return SensitivityState(
        -m1p * ds + V * qq + 2 * V * kappa * q * dq,
        L * (m1p * ds - 2 * V * qq - V * (m2p + 4 * kappa * q) * dq),
        V * (qq + (m2p + 2 * kappa * q) * dq),
        m1p * ds + V * m2p * dq,
    )


def augmented_vector_field(params: ModelParams):
    """8-dimensional ``(state, sensitivity)`` vector field."""
    K, L, V, kappa = float(params.K), float(params.L), float(params.V), float(params.kappa)

    def rhs(y):
        s = y[0] if y[0] > 0.0 else 0.0
        q = y[1] if y[1] > 0.0 else 0.0
        ds, dq = y[4], y[5]
        m1 = s / (K + s)
        m2 = q / (1.0 + q)
        m1p = K / ((K + s) * (K + s))
        m2p = 1.0 / ((1.0 + q) * (1.0 + q))
        qq = q * q
        tq = kappa * qq
        return np.array([
            -m1 + V * tq,
            L * (m1 - V * (m2 + 2.0 * tq)),
            V * (m2 + tq),
            m1 + V * m2,
            -m1p * ds + V * qq + 2.0 * V * kappa * q * dq,
            L * (m1p * ds - 2.0 * V * qq - V * (m2p + 4.0 * kappa * q) * dq),
            V * (qq + (m2p + 2.0 * kappa * q) * dq),
            m1p * ds + V * m2p * dq,
        ])

    return rhs


@dataclass
class SensitivitySeries:
    t: np.ndarray
    state: np.ndarray  # (n, 4): s, q, p, f
    sens: np.ndarray  # (n, 4): ds, dq, dp, df

    def conservation_residuals(self, L: float) -> np.ndarray:
        """Differentiated conservation laws, shape ``(n, 2)``."""
        ds, dq, dp, df = self.sens.T
        return np.column_stack([ds + dq / L + dp, 3 * ds + 2 * dq / L + dp + df])


def simulate_sensitivity(params: ModelParams, cfg: IntegratorConfig | None = None, *, t_eval=None) -> SensitivitySeries:
    """Integrate the full system together with its ``kappa``-sensitivities."""
    cfg = cfg or IntegratorConfig(t_end=10.0)
    y0 = np.concatenate([np.asarray(initial_state(params), dtype=float), np.zeros(4)])
    traj = integrate(augmented_vector_field(params), y0, cfg, t_eval=t_eval)
    return SensitivitySeries(traj.t, traj.y[:, :4], traj.y[:, 4:])


# -- QSSA sensitivities --------------------------------------------------


def qssa_sensitivity(s: float, ds_dk: float, params: ModelParams):
    """Return ``(dq_dk, d/dt ds_dk)`` on the QSSA manifold at TG level ``s``."""
    K, V, kappa = params.K, params.V, params.kappa
    qt = solve_qssa_input((s / (K + s)) / V, kappa)
    mu = m2_prime(qt) + 4 * kappa * qt
    m1p = m1_prime(s, K)
    dq = (m1p / V * ds_dk - 2 * qt * qt) / mu
    dds = -m1p * (1 - 2 * kappa * qt / mu) * ds_dk + V * qt * qt * (1 - 4 * kappa * qt / mu)
    return dq, dds


@dataclass
class QssaSensitivitySeries:
    t: np.ndarray
    s: np.ndarray
    q: np.ndarray
    ds_dk: np.ndarray
    dq_dk: np.ndarray

    @property
    def dp_dk(self) -> np.ndarray:
        return -self.ds_dk


def simulate_qssa_sensitivity(params: ModelParams, cfg: IntegratorConfig | None = None, *, t_eval=None) -> QssaSensitivitySeries:
    """Integrate the zero-order reduced TG flow with its ``kappa``-sensitivity."""
    cfg = cfg or IntegratorConfig(t_end=10.0)
    K, V, kappa = float(params.K), float(params.V), float(params.kappa)

    def rhs(y):
        s = y[0] if y[0] > 0.0 else 0.0
        m1 = s / (K + s)
        qt = solve_qssa_input(m1 / V, kappa)
        _, dds = qssa_sensitivity(s, y[1], params)
        return np.array([-m1 + V * kappa * qt * qt, dds])

    traj = integrate(rhs, [1.0, 0.0], cfg, t_eval=t_eval)
    s = np.clip(traj.y[:, 0], 0.0, None)
    q = np.empty_like(s)
    dq = np.empty_like(s)
    for i, (si, dsi) in enumerate(zip(s, traj.y[:, 1])):
        q[i] = solve_qssa_input((si / (K + si)) / V, kappa)
        dq[i] = qssa_sensitivity(si, dsi, params)[0]
    return QssaSensitivitySeries(traj.t, s, q, traj.y[:, 1].copy(), dq)


# -- finite-difference oracle --------------------------------------------


def fd_sensitivity_oracle(params: ModelParams, t_grid, h: float = 1e-4, cfg: IntegratorConfig | None = None) -> np.ndarray:
    """Central differences of full trajectories at ``kappa (1 +- h)``.

    Returns an ``(n, 4)`` array aligned with ``t_grid``.  Both runs use
    tight tolerances so that integration noise stays well below the
    truncation error of the difference quotient.
    """
    if not params.kappa > 0:
        raise ValueError("finite-difference oracle needs kappa > 0")
    if not h > 0:
        raise ValueError("relative step h must be positive")
    t_grid = np.asarray(t_grid, dtype=float)
    cfg = cfg or IntegratorConfig(ORACLE_CFG.rtol, ORACLE_CFG.atol, float(t_grid[-1]))
    dk = h * params.kappa
    up = simulate(params.replace(kappa=params.kappa + dk), cfg, t_eval=t_grid)
    dn = simulate(params.replace(kappa=params.kappa - dk), cfg, t_eval=t_grid)
    return (up.y - dn.y) / (2.0 * dk)


def oracle_deviation(params: ModelParams, t_grid, h: float = 1e-4, floor: float = 1e-6) -> float:
    """Largest pointwise relative gap between forward and FD sensitivities.

    Points where the oracle magnitude is at most ``floor`` are skipped.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    cfg = IntegratorConfig(ORACLE_CFG.rtol, ORACLE_CFG.atol, float(t_grid[-1]))
    fwd = simulate_sensitivity(params, cfg, t_eval=t_grid).sens
    fd = fd_sensitivity_oracle(params, t_grid, h, cfg)
    mask = np.abs(fd) > floor
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(fwd[mask] - fd[mask]) / np.abs(fd[mask])))


# -- sign discrepancy between full and reduced MG sensitivity -----------


@dataclass(frozen=True)
class DiscrepancyReport:
    start: float
    end: float
    duration: float
    full_max: float
    qssa_max: float


def _probe_grid(t_end: float, n: int) -> np.ndarray:
    return np.unique(np.concatenate([[0.0], np.geomspace(1e-6, min(1e-1, t_end), 200), np.linspace(0.0, t_end, n)]))


def sign_discrepancy_probe(
    params: ModelParams,
    t_end: float = 10.0,
    n_points: int = 2001,
    tol: float = 1e-12,
    cfg: IntegratorConfig | None = None,
) -> DiscrepancyReport | None:
    """Earliest interval where full ``dp/dkappa`` and QSSA ``dp~/dkappa`` differ in sign.

    Values within ``tol`` of zero count as zero.  Returns ``None`` when the
    signs agree at every interior grid point.
    """
    cfg = cfg or IntegratorConfig(t_end=t_end)
    grid = _probe_grid(t_end, n_points)
    full = simulate_sensitivity(params, cfg, t_eval=grid)
    red = simulate_qssa_sensitivity(params, cfg, t_eval=grid)
    a = full.sens[:, 2]
    b = red.dp_dk

    def sgn(x):
        return np.where(np.abs(x) <= tol, 0, np.sign(x))

    differ = sgn(a) != sgn(b)
    differ[0] = False
    idx = np.flatnonzero(differ)
    if idx.size == 0:
        return None
    i0 = idx[0]
    i1 = i0
    while i1 + 1 < len(grid) and differ[i1 + 1]:
        i1 += 1
    start = float(grid[i0 - 1])
    end = float(grid[i1 + 1]) if i1 + 1 < len(grid) else float(grid[i1])
    return DiscrepancyReport(start, end, end - start, float(np.max(a)), float(np.max(b)))
