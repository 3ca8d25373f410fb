"""Post-processing of trajectories: mass, splitting off the constant mode,
decay rates, Gronwall envelopes, positivity and equilibrium limits.

All pairings use the consistent mass matrix ``M`` (the discrete L2 inner
product). The normalized constant mode is ``e1 = 1 / sqrt(m)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .coefficients import BoundsCertificate, RegimeClass
from .integrator import Trajectory

FIT_TOLERANCE = 0.05
CONVENTIONS = ("divide", "multiply")
EPS_FRACTION = 0.01


class AnalysisError(ValueError):
    pass


def e1_vector(M) -> np.ndarray:
    n = M.shape[0]
    total = float(np.ones(n) @ (M @ np.ones(n)))
    return np.full(n, 1.0 / math.sqrt(total))


def m_norm(M, v) -> float:
    return math.sqrt(max(float(v @ (M @ v)), 0.0))


@dataclass
class MassSeries:
    times: np.ndarray
    values: np.ndarray

    @property
    def drift(self) -> float:
        """Largest deviation from the initial value, relative to it."""
        ref = max(abs(self.values[0]), np.finfo(float).tiny)
        return float(np.max(np.abs(self.values - self.values[0])) / ref)

    def oscillation(self, t_a: float, t_b: float) -> float:
        sel = (self.times >= t_a) & (self.times <= t_b)
        if not np.any(sel):
            raise AnalysisError(f"no samples in [{t_a}, {t_b}]")
        v = self.values[sel]
        return float(v.max() - v.min())


def mass_series(traj: Trajectory, M) -> MassSeries:
    w = M @ e1_vector(M)
    return MassSeries(traj.times, traj.states @ w)


@dataclass
class Decomposition:
    times: np.ndarray
    mass: np.ndarray  # <u, e1>_M per sample
    u1: np.ndarray
    utilde: np.ndarray
    M: object

    def norms(self) -> np.ndarray:
        MU = (self.M @ self.utilde.T).T
        return np.sqrt(np.maximum(np.einsum("ij,ij->i", self.utilde, MU), 0.0))

    def total_norms(self) -> np.ndarray:
        u = self.u1 + self.utilde
        MU = (self.M @ u.T).T
        return np.sqrt(np.maximum(np.einsum("ij,ij->i", u, MU), 0.0))


def decompose(traj: Trajectory, M) -> Decomposition:
    e1 = e1_vector(M)
    mass = traj.states @ (M @ e1)
    u1 = np.outer(mass, e1)
    utilde = traj.states - u1
    # an exactly constant state has no fluctuating part; skip the rounding
    flat = np.ptp(traj.states, axis=1) == 0
    u1[flat] = traj.states[flat]
    utilde[flat] = 0.0
    return Decomposition(traj.times, mass, u1, utilde, M)


def noise_floor(dec: Decomposition) -> float:
    """Norm level below which ``|u~|_M`` is rounding noise: 1e3 eps |u(0)|_M."""
    return 1e3 * np.finfo(float).eps * max(float(dec.total_norms()[0]), np.finfo(float).tiny)


def predicted_rate(regime: RegimeClass, lambda2_lower: float, beta: float = 1.0) -> float | None:
    eps = EPS_FRACTION * lambda2_lower
    if regime.kind == "b_identity":
        return lambda2_lower - eps
    if regime.kind == "b_nonincreasing":
        return (lambda2_lower - eps) * beta
    if regime.kind == "b_growth":
        return (lambda2_lower - regime.c - eps) * beta
    return None


@dataclass
class DecayReport:
    fitted_rate: float
    predicted_rate: float | None
    bound_satisfied: bool | None
    window: tuple[float, float]
    samples: int


def fit_decay_rate(dec: Decomposition, window=None, regime: RegimeClass | None = None,
                   lambda2_lower: float | None = None, beta: float = 1.0) -> DecayReport:
    """Least-squares slope of ``-log |u~(t)|_M`` over a window.

    The default window is the later half of the samples whose norm is above
    ``1e3 * machine eps * |u(0)|_M``.
    """
    norms = dec.norms()
    floor = noise_floor(dec)
    alive = np.flatnonzero(norms > floor)
    if window is None:
        if alive.size < 10:
            raise AnalysisError("norms below floor: too few samples to fit a decay rate")
        idx = alive[alive.size // 2 :]
    else:
        t_a, t_b = window
        idx = np.flatnonzero((dec.times >= t_a) & (dec.times <= t_b))
        if np.any(norms[idx] <= floor):
            raise AnalysisError("norms below floor inside the fit window")
    if idx.size < 10:
        raise AnalysisError(f"fit window holds {idx.size} samples, need at least 10")
    t = dec.times[idx]
    slope = np.polyfit(t, np.log(norms[idx]), 1)[0]
    fitted = float(-slope)
    pred = ok = None
    if regime is not None and lambda2_lower is not None:
        pred = predicted_rate(regime, lambda2_lower, beta)
        if pred is not None:
            ok = fitted >= pred * (1.0 - FIT_TOLERANCE)
    return DecayReport(fitted, pred, ok, (float(t[0]), float(t[-1])), int(idx.size))


@dataclass
class GronwallReport:
    times: np.ndarray
    norms: np.ndarray
    bounds: np.ndarray
    rate: float
    epsilon: float
    floor: float = 0.0

    @property
    def margins(self) -> np.ndarray:
        return self.bounds - self.norms

    @property
    def satisfied(self) -> bool:
        """Pointwise check; norms under the rounding floor count as zero."""
        return bool(np.all(self.norms <= np.maximum(self.bounds * (1 + 1e-12), self.floor)))

    @property
    def worst(self) -> tuple[float, float]:
        """``(time, margin)`` at the smallest relative margin."""
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(self.bounds > 0, self.margins / self.bounds, self.margins)
        i = int(np.argmin(rel))
        return float(self.times[i]), float(rel[i])


def gronwall_envelope(regime: RegimeClass, lambda2_lower: float, beta: float, u0_norm: float,
                      utilde0_norm: float, times, F_norms=None, convention: str = "divide"):
    """Pointwise envelope for ``|u~(t)|_M`` in the given regime.

    ``b_identity``: ``(|u~0|^2 + I(t) / (2 eps))^{1/2} exp(-t (lam - eps))``.
    ``b_nonincreasing`` and ``b_growth``:
    ``(|u0|^2 / beta^2 + I(t) / (2 eps beta))^{1/2} exp(-t r)`` where the rate is
    ``(lam - eps) / beta`` (``convention="divide"``) or ``(lam - eps) * beta``
    (``convention="multiply"``) for the nonincreasing case and
    ``(lam - c - eps) * beta`` under growth. ``I(t)`` is the trapezoid integral
    of ``|F|^2``.
    """
    times = np.asarray(times, dtype=float)
    eps = EPS_FRACTION * lambda2_lower
    if F_norms is None:
        I = np.zeros_like(times)
    else:
        I = integrate.cumulative_trapezoid(np.asarray(F_norms) ** 2, times, initial=0.0)
    if regime.kind == "b_identity":
        pre = np.sqrt(utilde0_norm**2 + I / (2 * eps))
        rate = lambda2_lower - eps
    elif regime.kind == "b_nonincreasing":
        pre = np.sqrt(u0_norm**2 / beta**2 + I / (2 * eps * beta))
        rate = (lambda2_lower - eps) / beta if convention == "divide" else (lambda2_lower - eps) * beta
    elif regime.kind == "b_growth":
        pre = np.sqrt(u0_norm**2 / beta**2 + I / (2 * eps * beta))
        rate = (lambda2_lower - regime.c - eps) * beta
    else:
        raise AnalysisError("no exponential envelope is available in the general regime")
    return pre * np.exp(-times * rate), rate, eps


def check_gronwall_bound(dec: Decomposition, regime: RegimeClass, cert: BoundsCertificate | None,
                         lambda2_lower: float, F_norms=None, convention: str = "divide") -> GronwallReport:
    beta = 1.0 if cert is None else cert.beta
    norms = dec.norms()
    u0_norm = float(dec.total_norms()[0])
    bounds, rate, eps = gronwall_envelope(regime, lambda2_lower, beta, u0_norm, float(norms[0]),
                                          dec.times, F_norms, convention)
    return GronwallReport(dec.times, norms, bounds, rate, eps, noise_floor(dec))


@dataclass
class PositivityReport:
    min_value: float
    time: float
    dof: int
    negative: bool


def positivity_monitor(traj: Trajectory, ptol: float = 0.0) -> PositivityReport:
    i, k = np.unravel_index(int(np.argmin(traj.states)), traj.states.shape)
    v = float(traj.states[i, k])
    return PositivityReport(v, float(traj.times[i]), int(k), v < -ptol)


@dataclass
class EquilibriumReport:
    predicted_mass: float
    final_mass: float
    F_inf: float
    residual: float
    state_residual: float


def equilibrium_limit(traj: Trajectory, M, F_mass=None, tail_tol: float = 1e-8) -> EquilibriumReport:
    """Compare the final mass with ``<u0, e1> + F_inf``.

    ``F_mass(t)`` is ``<F(t), e1>_H`` (None means zero forcing); ``F_inf`` is
    its integral over ``[0, inf)``. Raises if more than ``tail_tol`` of that
    integral lies beyond the simulated horizon.
    """
    ms = mass_series(traj, M)
    if F_mass is None:
        F_inf = 0.0
    else:
        t_end = float(traj.times[-1])
        head, _ = integrate.quad(F_mass, 0.0, t_end, limit=200)
        tail, _ = integrate.quad(lambda s: abs(F_mass(s)), t_end, np.inf, limit=200)
        if tail > tail_tol * max(1.0, abs(head)):
            raise AnalysisError(f"forcing integral not converged on the horizon (tail {tail:.3e})")
        F_inf = head + integrate.quad(F_mass, t_end, np.inf, limit=200)[0]
    predicted = float(ms.values[0] + F_inf)
    final = float(ms.values[-1])
    e1 = e1_vector(M)
    state_res = m_norm(M, traj.final - predicted * e1)
    return EquilibriumReport(predicted, final, F_inf, abs(final - predicted), state_res)


def weighted_energy(traj: Trajectory, system) -> np.ndarray:
    """``u_n^T M_B(t_n) u_n`` per sample."""
    return np.array([u @ (system.MB(t) @ u) for t, u in zip(traj.times, traj.states)])
