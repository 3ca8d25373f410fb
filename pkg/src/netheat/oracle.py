"""Independent references: closed-form spectra, dense modal evolution, refinement studies."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .coefficients import CoefficientSet, Constant
from .fem import AssembledSystem, build_mesh
from .graph import MetricGraph
from .spectral import generalized_eigs

DENSE_ORACLE_LIMIT = 2000


class OracleError(ValueError):
    pass


def closed_form_eigs(family: str, k: int, length: float = 1.0) -> np.ndarray:
    """Smallest ``k`` Laplacian eigenvalues of a Neumann interval or a circle."""
    if k < 1:
        raise OracleError("k must be at least 1")
    if family == "interval":
        return np.array([(i * math.pi / length) ** 2 for i in range(k)])
    if family == "cycle":
        vals = [0.0]
        j = 1
        while len(vals) < k:
            lam = (2 * math.pi * j / length) ** 2
            vals.extend([lam, lam])
            j += 1
        return np.array(vals[:k])
    raise OracleError(f"unsupported family {family!r}")


def dense_reference_evolution(system: AssembledSystem, u0, t_end: float, t0: float = 0.0) -> np.ndarray:
    """Exact semi-discrete solution by full modal expansion of ``(K, M_B)``.

    ``u(t) = sum_k exp(-lam_k t) <u0, x_k>_{M_B} x_k`` with M_B-orthonormal
    ``x_k``; valid only for time-independent coefficients.
    """
    if not system.coeffs.is_autonomous():
        raise OracleError("modal oracle requires constant coefficients")
    n = system.n_dofs
    if n > DENSE_ORACLE_LIMIT:
        raise OracleError(f"{n} unknowns exceed the dense oracle limit {DENSE_ORACLE_LIMIT}")
    MB = system.MB(t0).toarray()
    lam, X = la.eigh(system.K(t0).toarray(), MB)
    lam = np.maximum(lam, 0.0)
    coef = X.T @ (MB @ np.asarray(u0, dtype=float))
    return X @ (np.exp(-lam * t_end) * coef)


@dataclass
class RefinementResult:
    Ns: np.ndarray
    hs: np.ndarray
    values: np.ndarray
    exact: float
    errors: np.ndarray
    orders: np.ndarray  # NaN for the first level

    @property
    def order(self) -> float:
        return float(self.orders[-1])

    def rows(self):
        for N, h, e, p in zip(self.Ns, self.hs, self.errors, self.orders):
            yield int(N), float(h), float(e), float(p)


def refinement_study(g: MetricGraph, family: str, Ns, index: int = 2, length: float | None = None,
                     coeffs: CoefficientSet | None = None) -> RefinementResult:
    """Error of the ``index``-th eigenvalue (1-based) against the closed form.

    ``g`` must realize ``family`` with unit coefficients (a path for
    ``interval``, a cycle for ``cycle``); ``length`` defaults to ``g.m``.
    Eigenvalues belonging to a degenerate cluster are averaged over it.
    """
    Ns = np.asarray(Ns, dtype=int)
    if Ns.size < 3:
        raise OracleError("need at least three refinement levels")
    length = float(g.m if length is None else length)
    if coeffs is None:
        coeffs = CoefficientSet.uniform(g.m, Constant(1.0))
    kk = index + 1
    exact_all = closed_form_eigs(family, kk, length)
    exact = float(exact_all[index - 1])
    partners = [i for i in range(kk) if abs(exact_all[i] - exact) <= 1e-12 * max(1.0, exact)]
    values = []
    for N in Ns:
        s = AssembledSystem(build_mesh(g, int(N)), coeffs)
        lam = generalized_eigs(s.K(0.0), s.M, kk).eigenvalues
        values.append(float(np.mean(lam[partners])))
    values = np.array(values)
    errors = np.abs(values - exact)
    hs = 1.0 / (Ns + 1.0)
    orders = np.full(Ns.size, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        orders[1:] = np.log(errors[:-1] / errors[1:]) / np.log(hs[:-1] / hs[1:])
    return RefinementResult(Ns, hs, values, exact, errors, orders)
