"""Generalized symmetric eigenproblems ``K(t) x = lambda M x`` and their tracking in time."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coefficients import BoundsCertificate, limit_coefficients, settle_time
from .fem import AssembledSystem

DENSE_LIMIT = 2000
RTOL = 1e-10


class SpectralError(RuntimeError):
    pass


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("NETHEAT_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, M-orthonormal

    def clusters(self, rtol: float = 1e-8) -> list[list[int]]:
        """Group indices of numerically equal eigenvalues."""
        groups: list[list[int]] = []
        scale = max(1.0, float(np.max(np.abs(self.eigenvalues))))
        for i, lam in enumerate(self.eigenvalues):
            if groups and abs(lam - self.eigenvalues[groups[-1][-1]]) <= rtol * scale:
                groups[-1].append(i)
            else:
                groups.append([i])
        return groups


def _fix_signs(X: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(X), axis=0)
    signs = np.sign(X[idx, np.arange(X.shape[1])])
    signs[signs == 0] = 1.0
    return X * signs


def generalized_eigs(K, M, k: int, rtol: float = RTOL, atol: float = 1e-9) -> SpectralDecomposition:
    """The ``k`` smallest eigenpairs of the symmetric pencil ``(K, M)``.

    Dense LAPACK for up to ``DENSE_LIMIT`` unknowns, shift-invert Lanczos
    above that. Residuals and M-orthonormality are verified before returning.
    """
    n = K.shape[0]
    if not 1 <= k <= n:
        raise SpectralError(f"requested {k} eigenpairs of a {n}x{n} pencil")
    if n <= DENSE_LIMIT:
        Kd = K.toarray() if sp.issparse(K) else np.asarray(K)
        Md = M.toarray() if sp.issparse(M) else np.asarray(M)
        try:
            lam, X = la.eigh(Kd, Md, subset_by_index=[0, k - 1])
        except la.LinAlgError as exc:
            raise SpectralError(f"mass matrix is not positive definite: {exc}") from None
        knorm, mnorm = np.linalg.norm(Kd, 1), np.linalg.norm(Md, 1)
    else:
        Kd, Md = sp.csc_matrix(K), sp.csc_matrix(M)
        try:
            # K is singular, so shift slightly below the spectrum
            lam, X = spla.eigsh(Kd, k=k, M=Md, sigma=-1.0, which="LM", tol=rtol * 1e-2)
        except spla.ArpackNoConvergence as exc:
            raise SpectralError("Lanczos iteration did not converge") from exc
        order = np.argsort(lam)
        lam, X = lam[order], X[:, order]
        knorm, mnorm = spla.norm(Kd, 1), spla.norm(Md, 1)
    X = _fix_signs(X)

    R = Kd @ X - (Md @ X) * lam
    for i in range(k):
        xn = np.linalg.norm(X[:, i])
        if np.linalg.norm(R[:, i]) > rtol * (knorm + abs(lam[i]) * mnorm) * xn:
            raise SpectralError(f"eigenpair {i + 1} residual above tolerance")
    G = X.T @ Md @ X
    if np.max(np.abs(G - np.eye(k))) > 1e-8:
        raise SpectralError("eigenvectors are not M-orthonormal")
    if lam[0] < -atol * max(1.0, abs(lam[-1])):
        raise SpectralError(f"stiffness is not positive semidefinite (lambda_1 = {lam[0]:.3e})")
    return SpectralDecomposition(lam, X)


@dataclass
class SpectralTrack:
    times: np.ndarray
    lambdas: np.ndarray  # shape (len(times), k)
    lambda2_lower: float
    continuity_modulus: np.ndarray  # per k
    limit: np.ndarray | None = None
    extended_to: float | None = None
    certified: bool = field(default=False)

    @property
    def status(self) -> str:
        return "certified" if self.certified else "estimated, not certified"


def _eigs_at(system: AssembledSystem, t: float, k: int) -> np.ndarray:
    return generalized_eigs(system.K(t), system.M, k).eigenvalues


def eigenvalues_over(system: AssembledSystem, times, k: int, workers: int | None = None) -> np.ndarray:
    workers = thread_count() if workers is None else workers
    times = list(times)
    if workers > 1 and len(times) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda t: _eigs_at(system, t, k), times))
    else:
        rows = [_eigs_at(system, t, k) for t in times]
    return np.array(rows)


def track_spectrum(system: AssembledSystem, times, k: int, extend_to_limit: bool = False,
                   max_extension: int = 4000) -> SpectralTrack:
    """Eigenvalues on a time grid, with the infimum of ``lambda_2``.

    With ``extend_to_limit`` the grid is continued (same spacing, at most
    ``max_extension`` extra points) until every profile is within 1e-6 of its
    limit, and the limit-coefficient spectrum is appended as the t=inf sample.
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0 or np.any(np.diff(times) <= 0):
        raise SpectralError("time grid must be nonempty and strictly increasing")
    if k < 2:
        raise SpectralError("need k >= 2 to bound lambda_2")
    limit = None
    extended_to = None
    if extend_to_limit:
        ts = settle_time(system.coeffs)
        if ts is not None and ts > times[-1]:
            step = times[-1] - times[-2] if times.size > 1 else max(ts - times[-1], 1.0) / 100
            count = min(int(math.ceil((ts - times[-1]) / step)), max_extension)
            step = max(step, (ts - times[-1]) / count)
            times = np.concatenate([times, times[-1] + step * np.arange(1, count + 1)])
            extended_to = float(times[-1])
        lim = limit_coefficients(system.coeffs)
        if lim is not None:
            limit = _eigs_at(system.with_coefficients(lim), 0.0, k)
    lambdas = eigenvalues_over(system, times, k)
    lam2 = float(lambdas[:, 1].min())
    if limit is not None:
        lam2 = min(lam2, float(limit[1]))
    if times.size > 1:
        modulus = np.max(np.abs(np.diff(lambdas, axis=0)) / np.diff(times)[:, None], axis=0)
    else:
        modulus = np.zeros(k)
    certified = system.coeffs.is_autonomous()
    return SpectralTrack(times, lambdas, lam2, modulus, limit, extended_to, certified)


@dataclass
class ContinuityReport:
    t: float
    deltas: np.ndarray
    base: np.ndarray  # lambda_k(t)
    differences: np.ndarray  # shape (len(deltas), k)
    constants: np.ndarray  # C_k
    bound_ok: np.ndarray  # per k
    monotone_ok: np.ndarray  # per k
    halving_ratios: np.ndarray  # shape (len(deltas) - 1, k)

    @property
    def passed(self) -> np.ndarray:
        return self.bound_ok & self.monotone_ok


def eigenvalue_continuity_test(system: AssembledSystem, t: float, deltas, k: int,
                               certificate: BoundsCertificate) -> ContinuityReport:
    """Compare ``lambda_k(t + delta)`` with ``lambda_k(t)`` for shrinking deltas.

    Because ``K(t) = sum_j mu_j(t) K_j`` with every ``K_j`` semidefinite,
    ``K(t + delta)`` lies between ``(1 -+ L delta / eps) K(t)`` in Loewner
    order, so ``|lambda_k(t + delta) - lambda_k(t)| <= lambda_k(t) L delta / eps``.
    """
    deltas = np.asarray(deltas, dtype=float)
    base = _eigs_at(system, t, k)
    pert = eigenvalues_over(system, t + deltas, k)
    diffs = np.abs(pert - base)
    floor = RTOL * 10 * np.maximum(1.0, base)
    C = base * certificate.lipschitz_mu_max / certificate.epsilon
    bound_ok = np.all(diffs <= C * deltas[:, None] + floor, axis=0)
    clipped = np.where(diffs <= floor, 0.0, diffs)
    tail = clipped[len(deltas) // 2 :]
    monotone_ok = np.all(np.diff(tail, axis=0) <= 0, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = clipped[:-1] / clipped[1:]
    return ContinuityReport(t, deltas, base, diffs, C, bound_ok, monotone_ok, ratios)


@dataclass
class ResolventReport:
    omega: float
    norm: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.norm <= self.bound * (1 + 1e-10)


def check_discrete_resolvent_bounds(system: AssembledSystem, t: float, omega: float) -> ResolventReport:
    """M-norm of ``(omega + M^{-1} K(t))^{-1}`` against ``1 / omega``."""
    if omega <= 0:
        raise SpectralError("omega must be positive; omega*M + K is not definite otherwise")
    M = system.M.toarray()
    S = omega * M + system.K(t).toarray()
    L = la.cholesky(M, lower=True)
    # L^T (omega M + K)^{-1} L is symmetric and similar to the discrete resolvent
    W = L.T @ la.solve(S, L, assume_a="pos")
    norm = float(la.eigvalsh(0.5 * (W + W.T))[-1])
    return ResolventReport(omega, norm, 1.0 / omega)
