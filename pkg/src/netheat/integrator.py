"""Theta-method time stepping for ``M_B(t) u' + K(t) u = f(t)``.

The weight ``M_B`` is taken at the new time level; the stiffness is split
by theta. The step matrix ``M_B(t+) + theta dt K(t+)`` is then SPD.

Steps are normally solved for the increment ``u+ - u``, which keeps rounding
out of the slowly varying mass. Lumped backward Euler instead solves for
``u+`` directly: the step matrix is an M-matrix and a nonnegative right-hand
side then gives a nonnegative solution in floating point as well. Unforced
constant states are returned unchanged in both forms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import AssembledSystem


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 0.01
    theta: float = 1.0
    t_end: float = 1.0
    linear_tol: float = 1e-12
    lumped: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise IntegrationError("dt must be positive")
        if not 0.5 <= self.theta <= 1.0:
            raise IntegrationError("theta must lie in [0.5, 1]")
        if self.t_end < self.dt:
            raise IntegrationError("t_end must be at least dt")

    def time_grid(self) -> np.ndarray:
        n = int(math.floor(self.t_end / self.dt + 1e-9))
        ts = self.dt * np.arange(n + 1)
        if self.t_end - ts[-1] > 1e-12 * max(1.0, self.t_end):
            ts = np.append(ts, self.t_end)
        else:
            ts[-1] = self.t_end
        return ts


@dataclass
class StepInfo:
    method: str
    residual: float
    iterations: int = 0


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # shape (len(times), n_dofs)
    diagnostics: list[StepInfo] = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _factor(A: sp.spmatrix):
    # diagonal pivots only: SPD and M-matrix step operators need no row swaps,
    # and keeping the diagonal preserves the sign structure of M-matrix solves
    return spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                     options={"SymmetricMode": True})


def _solve_spd(A: sp.spmatrix, rhs: np.ndarray, tol: float, lu=None) -> tuple[np.ndarray, StepInfo]:
    """Sparse LU with iterative refinement; CG if the factorization fails."""
    bnorm = max(np.linalg.norm(rhs), np.finfo(float).tiny)
    try:
        lu = _factor(A) if lu is None else lu
        x = lu.solve(rhs)
        r = rhs - A @ x
        res = np.linalg.norm(r) / bnorm
        sweeps = 0
        while res > tol and sweeps < 3:
            x = x + lu.solve(r)
            r = rhs - A @ x
            res = np.linalg.norm(r) / bnorm
            sweeps += 1
        if np.all(np.isfinite(x)) and res <= max(tol, 1e-10):
            return x, StepInfo("lu", res, sweeps)
    except RuntimeError:
        pass
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = spla.cg(A, rhs, rtol=tol, atol=0.0, maxiter=10 * A.shape[0], callback=cb)
    res = np.linalg.norm(rhs - A @ x) / bnorm
    if info != 0:
        raise IntegrationError(f"linear solve failed (cg info={info}, residual={res:.2e})")
    return x, StepInfo("cg", res, count[0])


class _Stepper:
    """Builds step operators, reusing them when the coefficients are constant."""

    def __init__(self, system: AssembledSystem, theta: float, linear_tol: float):
        self.system = system
        self.theta = theta
        self.tol = linear_tol
        self.autonomous = system.coeffs.is_autonomous()
        self.direct = system.lumped and theta == 1.0
        self._cache: dict = {}

    def operators(self, t0: float, t1: float):
        dt = t1 - t0
        key = round(dt, 15)
        if self.autonomous and key in self._cache:
            return self._cache[key]
        MB = self.system.MB(t1)
        A = (MB + self.theta * dt * self.system.K(t1)).tocsc()
        ops = (A, MB, _factor(A) if self.autonomous else None)
        if self.autonomous:
            self._cache[key] = ops
        return ops

    def __call__(self, u, t0, t1, f0=None, f1=None):
        dt = t1 - t0
        if f1 is None and u.min() == u.max():
            return u.copy(), StepInfo("exact", 0.0)
        A, MB, lu = self.operators(t0, t1)
        forcing = None if f1 is None else dt * (self.theta * f1 + (1.0 - self.theta) * f0)
        if self.direct:
            rhs = MB @ u if forcing is None else MB @ u + forcing
            u1, info = _solve_spd(A, rhs, self.tol, lu)
        else:
            # A (u+ - u) = -dt [theta K(t+) + (1 - theta) K(t)] u + dt f_theta
            rhs = -(self.theta * dt) * self.system.apply_K(t1, u)
            if self.theta < 1.0:
                rhs = rhs - ((1.0 - self.theta) * dt) * self.system.apply_K(t0, u)
            if forcing is not None:
                rhs = rhs + forcing
            du, info = _solve_spd(A, rhs, self.tol, lu)
            u1 = u + du
        if not np.all(np.isfinite(u1)):
            raise IntegrationError(f"non-finite state at t={t1:.6g}")
        return u1, info


def step(u: np.ndarray, t: float, dt: float, system: AssembledSystem, F=None,
         theta: float = 1.0, linear_tol: float = 1e-12) -> tuple[np.ndarray, StepInfo]:
    """Advance one step from ``t`` to ``t + dt``.

    Solves ``[M_B(t+) + theta dt K(t+)] u+ = [M_B(t+) - (1-theta) dt K(t)] u
    + dt (theta f(t+) + (1-theta) f(t))``.
    """
    f0 = f1 = None
    if F is not None:
        f0, f1 = system.load(F, t), system.load(F, t + dt)
    return _Stepper(system, theta, linear_tol)(np.asarray(u, dtype=float), t, t + dt, f0, f1)


def simulate(u0, system: AssembledSystem, config: SolverConfig, F=None) -> Trajectory:
    """Repeated theta steps on ``config.time_grid()``; ``F`` as in ``assemble_load``."""
    u = np.asarray(u0, dtype=float).copy()
    if u.shape != (system.n_dofs,):
        raise IntegrationError(f"initial state has shape {u.shape}, expected ({system.n_dofs},)")
    if system.lumped != config.lumped:
        system = AssembledSystem(system.mesh, system.coeffs, lumped=config.lumped)
    times = config.time_grid()
    states = np.empty((times.size, u.size))
    states[0] = u
    diags = []
    stepper = _Stepper(system, config.theta, config.linear_tol)
    f_prev = system.load(F, times[0]) if F is not None else None
    for n in range(times.size - 1):
        f_next = system.load(F, times[n + 1]) if F is not None else None
        u, info = stepper(u, times[n], times[n + 1], f_prev, f_next)
        f_prev = f_next
        states[n + 1] = u
        diags.append(info)
    return Trajectory(times, states, diags)


@dataclass
class ConvergenceResult:
    dts: np.ndarray
    errors: np.ndarray
    orders: np.ndarray

    @property
    def order(self) -> float:
        return float(self.orders[-1])


def convergence_study(u0, system: AssembledSystem, dts, t_end: float, F=None, theta: float = 1.0,
                      exact=None, lumped: bool = False) -> ConvergenceResult:
    """Observed temporal order from a sequence of halving step sizes.

    With ``exact`` (a DOF vector at ``t_end``) errors are measured against it.
    Otherwise successive differences ``|u_dt - u_{dt/2}|_M`` are used; their
    ratios tend to ``2^p`` without needing a reference run.
    """
    dts = np.asarray(dts, dtype=float)
    if dts.size < 3:
        raise IntegrationError("need at least three step sizes")
    if not np.allclose(dts[:-1] / dts[1:], 2.0):
        raise IntegrationError("step sizes must halve")
    finals = []
    for dt in dts:
        cfg = SolverConfig(dt=dt, theta=theta, t_end=t_end, lumped=lumped)
        finals.append(simulate(u0, system, cfg, F).final)
    M = system.M

    def mnorm(v):
        return math.sqrt(max(float(v @ (M @ v)), 0.0))

    if exact is not None:
        errors = np.array([mnorm(u - exact) for u in finals])
    else:
        errors = np.array([mnorm(a - b) for a, b in zip(finals[:-1], finals[1:])])
    orders = np.log2(errors[:-1] / errors[1:])
    return ConvergenceResult(dts, errors, orders)
