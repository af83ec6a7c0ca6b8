"""scikit-learn style wrappers around the simulation and QSSA routines."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .integrator import IntegratorConfig
from .kinetics import ModelParams, simulate
from .qssa import MODELS, qssa_curve, simulate_reduced


def check_times(X) -> np.ndarray:
    """Validate query times given as ``(n,)`` or ``(n, 1)``; returns a flat array."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    arr = check_array(arr, ensure_2d=True, dtype=float)
    if arr.shape[1] != 1:
        raise ValueError(f"expected a single column of times, got shape {arr.shape}")
    if np.any(arr < 0):
        raise ValueError("times must be nonnegative")
    return arr[:, 0]


def check_concentrations(X) -> np.ndarray:
    """Validate nonnegative TG levels given as ``(n,)`` or ``(n, 1)``."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    arr = check_array(arr, dtype=float)
    if arr.shape[1] != 1:
        raise ValueError(f"expected a single column of TG values, got shape {arr.shape}")
    if np.any(arr < 0):
        raise ValueError("TG values must be nonnegative")
    return arr[:, 0]


class LipolysisSimulator(BaseEstimator):
    """Integrates the model on ``fit``; ``predict`` returns ``(s, q, p, f)`` at given times.

    ``X`` in ``fit`` is ignored (kept for API compatibility).  Query times
    beyond ``t_end`` are rejected.
    """

    def __init__(self, K=1.0, L=1.0, V=1.0, kappa=0.0, q0=0.0, model="full",
                 rtol=1e-8, atol=1e-10, t_end=100.0):
        self.K = K
        self.L = L
        self.V = V
        self.kappa = kappa
        self.q0 = q0
        self.model = model
        self.rtol = rtol
        self.atol = atol
        self.t_end = t_end

    def fit(self, X=None, y=None):
        if self.model != "full" and self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        self.params_ = ModelParams(self.K, self.L, self.V, self.kappa, self.q0)
        cfg = IntegratorConfig(self.rtol, self.atol, self.t_end)
        if self.model == "full":
            self.trajectory_ = simulate(self.params_, cfg)
        else:
            self.trajectory_ = simulate_reduced(self.params_, self.model, cfg)
        return self

    def predict(self, X):
        check_is_fitted(self, "trajectory_")
        t = check_times(X)
        if np.any(t > self.trajectory_.t_final):
            raise ValueError(f"times must not exceed {self.trajectory_.t_final}")
        return self.trajectory_(t)


class QssaTransformer(TransformerMixin, BaseEstimator):
    """Maps TG levels to the QSSA DG level ``qtilde(s)``."""

    def __init__(self, K=1.0, V=1.0, kappa=0.0):
        self.K = K
        self.V = V
        self.kappa = kappa

    def fit(self, X=None, y=None):
        if X is not None:
            check_concentrations(X)
        self.params_ = ModelParams(self.K, 1.0, self.V, self.kappa)
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        return qssa_curve(check_concentrations(X), self.params_).reshape(-1, 1)
