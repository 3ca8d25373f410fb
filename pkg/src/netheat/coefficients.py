"""Time profiles for conductivities mu_j(t) and diffusivities c_j(t).

Only profile shapes whose extrema, Lipschitz constants and logarithmic
derivatives can be computed in closed form are supported, so every bound
issued here is exact (or a sound over-estimate), never a sampled guess.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

BETA_CAP = 1.0 - 1e-9


class CoefficientError(ValueError):
    pass


class BoundsError(CoefficientError):
    """A profile leaves ``[eps, 1/eps]`` on the horizon."""

    def __init__(self, edge, which, t, value, epsilon):
        self.edge, self.which, self.t, self.value = edge, which, t, value
        super().__init__(
            f"{which}_{edge}({t:.6g}) = {value:.6g} exits [{epsilon:.6g}, {1 / epsilon:.6g}]"
        )


def _check_time(t):
    if np.any(np.asarray(t) < 0):
        raise CoefficientError(f"time must be non-negative, got {t}")


@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, t):
        _check_time(t)
        return np.full_like(np.asarray(t, dtype=float), self.value) if np.ndim(t) else float(self.value)

    def segments(self, horizon):
        return [(0.0, horizon, self.value, self.value)]

    def lipschitz(self) -> float:
        return 0.0

    def limit(self):
        return self.value

    def settle_time(self, tol):
        return 0.0


@dataclass(frozen=True)
class Affine:
    """``clip(value0 + slope * t, lo, hi)``."""

    value0: float
    slope: float
    lo: float = -math.inf
    hi: float = math.inf

    def __post_init__(self):
        if self.lo > self.hi:
            raise CoefficientError("affine profile needs lo <= hi")

    def __call__(self, t):
        _check_time(t)
        v = np.clip(self.value0 + self.slope * np.asarray(t, dtype=float), self.lo, self.hi)
        return v if np.ndim(t) else float(v)

    def _breaks(self, horizon):
        pts = [0.0]
        if self.slope != 0:
            for level in (self.lo, self.hi):
                if math.isfinite(level):
                    tc = (level - self.value0) / self.slope
                    if 0 < tc < horizon:
                        pts.append(tc)
        pts.append(horizon)
        return sorted(set(pts))

    def segments(self, horizon):
        pts = self._breaks(horizon)
        out = []
        for a, b in zip(pts[:-1], pts[1:]):
            va = self(a)
            vb = self.limit() if math.isinf(b) else self(b)
            out.append((a, b, va, vb))
        return out

    def lipschitz(self) -> float:
        return abs(self.slope)

    def limit(self):
        if self.slope > 0:
            return self.hi
        if self.slope < 0:
            return self.lo
        return float(np.clip(self.value0, self.lo, self.hi))

    def settle_time(self, tol):
        lim = self.limit()
        if not math.isfinite(lim):
            return None
        if self.slope == 0:
            return 0.0
        return max(0.0, (lim - self.value0) / self.slope)


@dataclass(frozen=True)
class PiecewiseLinear:
    """Linear interpolation through ``(t, v)`` samples, constant outside."""

    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.times) != len(self.values) or not self.times:
            raise CoefficientError("piecewise_linear needs matching, nonempty time and value lists")
        if any(b <= a for a, b in zip(self.times[:-1], self.times[1:])):
            raise CoefficientError("piecewise_linear sample times must be strictly increasing")

    @classmethod
    def from_samples(cls, samples):
        ts, vs = zip(*[(float(t), float(v)) for t, v in samples])
        return cls(ts, vs)

    def __call__(self, t):
        _check_time(t)
        v = np.interp(np.asarray(t, dtype=float), self.times, self.values)
        return v if np.ndim(t) else float(v)

    def segments(self, horizon):
        pts = [0.0] + [s for s in self.times if 0 < s < horizon] + [horizon]
        out = []
        for a, b in zip(pts[:-1], pts[1:]):
            vb = self.values[-1] if math.isinf(b) else self(b)
            out.append((a, b, self(a), vb))
        return out

    def lipschitz(self) -> float:
        if len(self.times) < 2:
            return 0.0
        return float(np.max(np.abs(np.diff(self.values) / np.diff(self.times))))

    def limit(self):
        return self.values[-1]

    def settle_time(self, tol):
        return max(0.0, self.times[-1])


@dataclass(frozen=True)
class ExpApproach:
    """``a + b * exp(-k t)`` with ``k > 0``."""

    a: float
    b: float
    k: float

    def __post_init__(self):
        if self.k <= 0:
            raise CoefficientError("exp_approach needs k > 0")

    def __call__(self, t):
        _check_time(t)
        v = self.a + self.b * np.exp(-self.k * np.asarray(t, dtype=float))
        return v if np.ndim(t) else float(v)

    def segments(self, horizon):
        # monotone, so endpoint values bracket the range
        return [(0.0, horizon, self(0.0), self.limit() if math.isinf(horizon) else self(horizon))]

    def lipschitz(self) -> float:
        return abs(self.b) * self.k

    def limit(self):
        return self.a

    def settle_time(self, tol):
        if self.b == 0 or abs(self.b) <= tol:
            return 0.0
        return math.log(abs(self.b) / tol) / self.k


Profile = Union[Constant, Affine, PiecewiseLinear, ExpApproach]


def evaluate(profile: Profile, t):
    """Evaluate a profile at ``t >= 0`` (scalar or array)."""
    return profile(t)


def first_exit(profile: Profile, lo: float, hi: float, horizon: float = math.inf):
    """Earliest ``(t, value)`` at which the profile leaves ``[lo, hi]``, or None."""
    for a, b, va, vb in profile.segments(horizon):
        if not lo <= va <= hi:
            return a, va
        if lo <= vb <= hi:
            continue
        level = lo if vb < lo else hi
        if isinstance(profile, ExpApproach):
            tc = -math.log((level - profile.a) / profile.b) / profile.k
        else:
            tc = a + (level - va) / (vb - va) * (b - a)
        # report a point just past the crossing, where the value is outside
        t_out = min(b, math.nextafter(tc, math.inf) + 1e-9 * max(1.0, tc))
        v_out = vb if math.isinf(t_out) else profile(t_out)
        return t_out, v_out
    return None


def extrema(profile: Profile, horizon: float = math.inf):
    """``(vmin, t_at_min, vmax, t_at_max)`` over ``[0, horizon]``."""
    vmin, tmin, vmax, tmax = math.inf, 0.0, -math.inf, 0.0
    for a, b, va, vb in profile.segments(horizon):
        for t, v in ((a, va), (b, vb)):
            if v < vmin:
                vmin, tmin = v, t
            if v > vmax:
                vmax, tmax = v, t
    return vmin, tmin, vmax, tmax


def log_rate_range(profile: Profile, horizon: float = math.inf):
    """Bounds ``(inf, sup)`` of ``p'(t)/p(t)`` over the horizon.

    For linear pieces ``s / v`` is monotone along the piece, for the
    exponential ``-bk / (a e^{kt} + b)`` is monotone in t; endpoints suffice.
    """
    if isinstance(profile, Constant):
        return 0.0, 0.0
    if isinstance(profile, ExpApproach):
        a, b, k = profile.a, profile.b, profile.k
        r0 = -b * k / (a + b)
        r1 = 0.0 if math.isinf(horizon) else -b * k / (a * math.exp(k * horizon) + b)
        return min(r0, r1), max(r0, r1)
    lo, hi = math.inf, -math.inf
    for a, b, va, vb in profile.segments(horizon):
        if math.isinf(b):
            s = profile.slope if isinstance(profile, Affine) and va != vb else 0.0
        elif b == a:
            s = 0.0
        else:
            s = (vb - va) / (b - a)
        for r in (s / va, s / vb):
            lo, hi = min(lo, r), max(hi, r)
    return lo, hi


def is_monotone(profile: Profile, horizon: float, decreasing: bool) -> bool:
    sign = -1.0 if decreasing else 1.0
    if isinstance(profile, ExpApproach):
        return sign * (-profile.b * profile.k) >= 0
    return all(sign * (vb - va) >= 0 for _, _, va, vb in profile.segments(horizon))


def profile_from_dict(d: dict) -> Profile:
    d = dict(d)
    kind = d.pop("kind", None)
    try:
        if kind == "constant":
            p = Constant(float(d.pop("value")))
        elif kind == "affine":
            p = Affine(
                float(d.pop("value0")),
                float(d.pop("slope")),
                float(d.pop("lo", -math.inf)),
                float(d.pop("hi", math.inf)),
            )
        elif kind == "piecewise_linear":
            p = PiecewiseLinear.from_samples(d.pop("samples"))
        elif kind == "exp_approach":
            p = ExpApproach(float(d.pop("a")), float(d.pop("b")), float(d.pop("k")))
        else:
            raise CoefficientError(f"unknown profile kind {kind!r}")
    except KeyError as exc:
        raise CoefficientError(f"profile {kind!r} missing field {exc.args[0]!r}") from None
    if d:
        raise CoefficientError(f"profile {kind!r} has unknown fields {sorted(d)}")
    return p


def profile_to_dict(p: Profile) -> dict:
    if isinstance(p, Constant):
        return {"kind": "constant", "value": p.value}
    if isinstance(p, Affine):
        out = {"kind": "affine", "value0": p.value0, "slope": p.slope}
        if math.isfinite(p.lo):
            out["lo"] = p.lo
        if math.isfinite(p.hi):
            out["hi"] = p.hi
        return out
    if isinstance(p, PiecewiseLinear):
        return {"kind": "piecewise_linear", "samples": [list(s) for s in zip(p.times, p.values)]}
    return {"kind": "exp_approach", "a": p.a, "b": p.b, "k": p.k}


@dataclass(frozen=True)
class CoefficientSet:
    mu: tuple[Profile, ...]
    c: tuple[Profile, ...]

    def __post_init__(self):
        if len(self.mu) != len(self.c):
            raise CoefficientError("mu and c need one profile per edge")

    @classmethod
    def uniform(cls, m: int, mu: Profile, c: Profile | None = None) -> "CoefficientSet":
        return cls(tuple([mu] * m), tuple([mu if c is None else c] * m))

    @property
    def m(self) -> int:
        return len(self.mu)

    def mu_at(self, t: float) -> np.ndarray:
        return np.array([p(t) for p in self.mu])

    def c_at(self, t: float) -> np.ndarray:
        return np.array([p(t) for p in self.c])

    def b_at(self, t: float) -> np.ndarray:
        return self.mu_at(t) / self.c_at(t)

    def is_autonomous(self) -> bool:
        return all(isinstance(p, Constant) for p in self.mu + self.c)


def eval_b(coeffs: CoefficientSet, j: int, t: float) -> float:
    """``b_j(t) = mu_j(t) / c_j(t)`` for the 1-based edge ``j``."""
    if not 1 <= j <= coeffs.m:
        raise CoefficientError(f"edge {j} out of range 1..{coeffs.m}")
    return coeffs.mu[j - 1](t) / coeffs.c[j - 1](t)


def _b_is_one(mu: Profile, c: Profile) -> bool:
    return mu == c


def b_range(mu: Profile, c: Profile, horizon: float):
    """Sound bounds ``(inf b, sup b)`` for ``b = mu / c`` on the horizon."""
    if _b_is_one(mu, c):
        return 1.0, 1.0
    mlo, _, mhi, _ = extrema(mu, horizon)
    clo, _, chi, _ = extrema(c, horizon)
    if isinstance(c, Constant):
        return mlo / c.value, mhi / c.value
    if isinstance(mu, Constant):
        return mu.value / chi, mu.value / clo
    return mlo / chi, mhi / clo


def b_log_rate_sup(mu: Profile, c: Profile, horizon: float) -> float:
    """Sound upper bound of ``b'/b = mu'/mu - c'/c``."""
    if _b_is_one(mu, c):
        return 0.0
    return log_rate_range(mu, horizon)[1] - log_rate_range(c, horizon)[0]


@dataclass(frozen=True)
class BoundsCertificate:
    epsilon: float
    lipschitz_mu: tuple[float, ...]
    lipschitz_b: tuple[float, ...]
    beta: float
    b_min: float
    b_max: float
    horizon: float

    @property
    def lipschitz_mu_max(self) -> float:
        return max(self.lipschitz_mu)


def certify_bounds(coeffs: CoefficientSet, epsilon: float, horizon: float = math.inf) -> BoundsCertificate:
    if not 0 < epsilon < 1:
        raise CoefficientError("epsilon must lie in (0, 1)")
    lo_ok, hi_ok = epsilon, 1.0 / epsilon
    b_lo, b_hi = math.inf, -math.inf
    lip_b = []
    for j, (mu, c) in enumerate(zip(coeffs.mu, coeffs.c), start=1):
        ranges = {}
        for name, p in (("mu", mu), ("c", c)):
            exit_at = first_exit(p, lo_ok, hi_ok, horizon)
            if exit_at is not None:
                raise BoundsError(j, name, exit_at[0], exit_at[1], epsilon)
            vmin, _, vmax, _ = extrema(p, horizon)
            ranges[name] = (vmin, vmax)
        lo, hi = b_range(mu, c, horizon)
        b_lo, b_hi = min(b_lo, lo), max(b_hi, hi)
        if _b_is_one(mu, c):
            lip_b.append(0.0)
        else:
            mhi, clo = ranges["mu"][1], ranges["c"][0]
            lip_b.append(mu.lipschitz() / clo + mhi * c.lipschitz() / clo**2)
    beta = min(math.sqrt(b_lo), 1.0 / math.sqrt(b_hi), BETA_CAP)
    return BoundsCertificate(
        epsilon=epsilon,
        lipschitz_mu=tuple(p.lipschitz() for p in coeffs.mu),
        lipschitz_b=tuple(lip_b),
        beta=beta,
        b_min=b_lo,
        b_max=b_hi,
        horizon=horizon,
    )


@dataclass(frozen=True)
class RegimeClass:
    """One of ``b_identity``, ``b_nonincreasing``, ``b_growth`` (with ``c``), ``general``."""

    kind: str
    c: float | None = None

    def __str__(self):
        return f"b_growth({self.c:.6g})" if self.kind == "b_growth" else self.kind


def growth_constant(coeffs: CoefficientSet, horizon: float = math.inf) -> float:
    """Smallest structurally verified ``c >= 0`` with ``b_j' <= 2 c b_j`` for all j."""
    sup = max(b_log_rate_sup(mu, c, horizon) for mu, c in zip(coeffs.mu, coeffs.c))
    return max(0.0, sup / 2.0)


def classify_regime(coeffs: CoefficientSet, lambda2_lower: float, horizon: float = math.inf) -> RegimeClass:
    pairs = list(zip(coeffs.mu, coeffs.c))
    if all(_b_is_one(mu, c) for mu, c in pairs):
        return RegimeClass("b_identity")

    def nonincreasing(mu, c):
        if _b_is_one(mu, c):
            return True
        return is_monotone(mu, horizon, decreasing=True) and is_monotone(c, horizon, decreasing=False)

    if all(nonincreasing(mu, c) for mu, c in pairs):
        return RegimeClass("b_nonincreasing")
    c = growth_constant(coeffs, horizon)
    if c < lambda2_lower:
        return RegimeClass("b_growth", c)
    return RegimeClass("general")


def limit_coefficients(coeffs: CoefficientSet) -> CoefficientSet | None:
    """Constant coefficients at ``t -> inf``, or None if some profile has no finite limit."""
    mu = [p.limit() for p in coeffs.mu]
    c = [p.limit() for p in coeffs.c]
    if not all(math.isfinite(v) for v in mu + c):
        return None
    return CoefficientSet(tuple(Constant(v) for v in mu), tuple(Constant(v) for v in c))


def settle_time(coeffs: CoefficientSet, tol: float = 1e-6) -> float | None:
    """Time after which every profile is within ``tol`` of its limit."""
    times = [p.settle_time(tol) for p in coeffs.mu + coeffs.c]
    if any(t is None for t in times):
        return None
    return max(times)
