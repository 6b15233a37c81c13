"""Data-driven uncertainty sets with distribution-free calibration.

Three set types share the ``contains`` / ``dim`` interface used by the robust
solver: :class:`BoxSet`, :class:`EllipsoidCapSet` (box intersected with a
Mahalanobis ball) and :class:`CostLevelSet` (box intersected with the
polyhedron of loads whose cheapest re-dispatch of a fixed schedule stays below
a cost level).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import logsumexp

from .io import read_wide_csv, write_wide_csv
from .system import CompactTwoStage, redispatch_value

MEMBERSHIP_TOL = 1e-9


def minimal_calibration_size(eps: float, delta: float) -> int:
    """Smallest ``N`` with ``(1 - eps)**N <= delta``."""
    if not (0 < eps < 1 and 0 < delta < 1):
        raise ValueError("eps and delta must lie in (0, 1)")
    log_keep, log_delta = math.log1p(-eps), math.log(delta)
    n = max(1, math.ceil(log_delta / log_keep))
    while n > 1 and (n - 1) * log_keep <= log_delta:
        n -= 1
    while n * log_keep > log_delta:
        n += 1
    return n


def _log_binom_pmf(N, p):
    m = np.arange(N + 1)
    log_c = (math.lgamma(N + 1) - np.array([math.lgamma(k + 1) for k in m])
             - np.array([math.lgamma(N - k + 1) for k in m]))
    with np.errstate(divide="ignore"):
        return log_c + m * np.log(p) + (N - m) * np.log1p(-p)


def quantile_order_index(N: int, eps: float, delta: float) -> int:
    """Smallest ``n`` with ``P[Binomial(N, 1 - eps) <= n - 1] >= 1 - delta``.

    The check is done on the upper tail ``P[Binomial >= n] <= delta`` summed in
    the log domain, which keeps full relative precision where it matters.
    """
    if not (0 < eps < 1 and 0 < delta < 1):
        raise ValueError("eps and delta must lie in (0, 1)")
    if N < 1:
        raise ValueError("N must be positive")
    logp = _log_binom_pmf(int(N), 1.0 - eps)
    # tail[n] = log P[Bin >= n] for n = 0..N
    tail = np.logaddexp.accumulate(logp[::-1])[::-1]
    log_delta = math.log(delta)
    ok = np.flatnonzero(tail[1:] <= log_delta)  # candidate n = 1..N
    if ok.size == 0:
        raise ValueError(
            f"N={N} is too small for eps={eps}, delta={delta}; need at least "
            f"{minimal_calibration_size(eps, delta)} calibration samples")
    return int(ok[0] + 1)


def sample_moments(errors):
    """Mean and unbiased covariance, ridge-regularised when nearly singular."""
    E = np.asarray(errors, dtype=float)
    if E.ndim == 1:
        E = E[:, None]
    n, dim = E.shape
    if n < 2:
        raise ValueError("need at least two samples for a covariance estimate")
    mu = E.mean(axis=0)
    Z = E - mu
    cov = Z.T @ Z / (n - 1)
    cov = 0.5 * (cov + cov.T)
    scale = np.trace(cov) / dim
    if scale <= 0:
        scale = 1.0
    if np.linalg.eigvalsh(cov)[0] < 1e-8 * scale:
        cov = cov + 1e-6 * scale * np.eye(dim)
    return mu, cov


@dataclass(frozen=True, eq=False)
class BoxSet:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, float).ravel()
        hi = np.asarray(self.upper, float).ravel()
        if lo.shape != hi.shape:
            raise ValueError("box bounds must have equal size")
        if np.any(lo > hi):
            raise ValueError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    kind = "box"

    @property
    def dim(self):
        return self.lower.size

    @property
    def box(self):
        return self

    def contains(self, u, tol: float = MEMBERSHIP_TOL) -> bool:
        u = np.asarray(u, float).ravel()
        return bool(np.all(u >= self.lower - tol) and np.all(u <= self.upper + tol))

    def vertices(self):
        import itertools

        free = np.flatnonzero(self.upper > self.lower)
        for bits in itertools.product((0, 1), repeat=free.size):
            v = self.lower.copy()
            v[free] = np.where(np.array(bits, bool), self.upper[free], self.lower[free])
            yield v

    def to_dict(self):
        return {"kind": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def singleton(cls, u):
        u = np.asarray(u, float).ravel()
        return cls(u, u.copy())


@dataclass(eq=False)
class EllipsoidCapSet:
    """``{u in box : (u - c)^T Sigma^{-1} (u - c) <= alpha}``."""

    box: BoxSet
    center: np.ndarray
    cov: np.ndarray
    alpha: float
    radii: np.ndarray = None  # calibration statistics, kept for reporting
    n_star: int | None = None
    cuts: list = field(default_factory=list)  # boundary points reused by the solver

    kind = "ellipsoid"

    def __post_init__(self):
        self.center = np.asarray(self.center, float).ravel()
        self.cov = np.asarray(self.cov, float)
        if self.cov.shape != (self.center.size, self.center.size):
            raise ValueError("covariance shape does not match the center")
        if self.center.size != self.box.dim:
            raise ValueError("center dimension does not match the box")
        if not self.alpha >= 0:
            raise ValueError("radius alpha must be nonnegative")
        self._chol = cho_factor(self.cov, lower=True)

    @property
    def dim(self):
        return self.center.size

    def solve(self, v):
        """``Sigma^{-1} v`` through the Cholesky factor."""
        return cho_solve(self._chol, np.asarray(v, float))

    def radius(self, u) -> np.ndarray:
        """Squared Mahalanobis distance of ``u`` (one row per point) from the center."""
        U = np.atleast_2d(np.asarray(u, float))
        Z = U - self.center
        W = cho_solve(self._chol, Z.T).T
        out = np.einsum("ij,ij->i", Z, W)
        return out if np.ndim(u) > 1 else out[0]

    def contains(self, u, tol: float = MEMBERSHIP_TOL) -> bool:
        return bool(self.box.contains(u, tol) and self.radius(u) <= self.alpha * (1 + tol) + tol)

    def boundary_point(self, u):
        """Radial projection of ``u`` onto the ellipsoid surface."""
        z = np.asarray(u, float) - self.center
        q = float(z @ self.solve(z))
        if q <= 0:
            return None
        return self.center + z * math.sqrt(self.alpha / q)

    def linear_maximizer(self, g):
        """Maximiser of ``g . u`` over the ellipsoid, ignoring the box."""
        g = np.asarray(g, float)
        sg = self.cov @ g
        n = float(g @ sg)
        if n <= 0:
            return self.center.copy()
        return self.center + sg * math.sqrt(self.alpha / n)

    def points_outside(self) -> int | None:
        if self.radii is None:
            return None
        return int(np.sum(self.radii > self.alpha * (1 + MEMBERSHIP_TOL) + MEMBERSHIP_TOL))

    def to_dict(self):
        return {"kind": "ellipsoid", "center": self.center.tolist(), "cov": self.cov.tolist(),
                "alpha": self.alpha, "box": self.box.to_dict(), "n_star": self.n_star}


@dataclass(eq=False)
class CostLevelSet:
    """``{u in box : min F.y s.t. A y >= B x0 + D u + E, y >= 0  <=  beta}``."""

    box: BoxSet
    x0: np.ndarray
    beta: float
    compact: CompactTwoStage
    b_values: np.ndarray = None
    n_star: int | None = None
    backend: str | None = None

    kind = "cost-level"

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, float).ravel()

    @property
    def dim(self):
        return self.box.dim

    @property
    def is_box(self):
        return not math.isfinite(self.beta)

    def cost(self, u) -> float:
        return redispatch_value(self.compact, self.x0, np.asarray(u, float).ravel(),
                                backend=self.backend)[0]

    def contains(self, u, tol: float = MEMBERSHIP_TOL) -> bool:
        if not self.box.contains(u, tol):
            return False
        if self.is_box:
            return True
        return self.cost(u) <= self.beta + tol * max(1.0, abs(self.beta))

    def points_outside(self) -> int | None:
        if self.b_values is None:
            return None
        return int(np.sum(self.b_values > self.beta + MEMBERSHIP_TOL * max(1.0, abs(self.beta))))

    def to_dict(self):
        return {"kind": "cost-level", "beta": self.beta, "x0": self.x0.tolist(),
                "box": self.box.to_dict(), "n_star": self.n_star}


def contains(uset, u) -> bool:
    return uset.contains(u)


def coverage(uset, samples) -> float:
    """Fraction of the rows of ``samples`` lying inside ``uset``."""
    S = np.atleast_2d(np.asarray(samples, float))
    if S.shape[0] == 0:
        raise ValueError("no samples")
    if isinstance(uset, EllipsoidCapSet):
        inside_box = np.all((S >= uset.box.lower - MEMBERSHIP_TOL)
                            & (S <= uset.box.upper + MEMBERSHIP_TOL), axis=1)
        r = uset.radius(S)
        ok = inside_box & (r <= uset.alpha * (1 + MEMBERSHIP_TOL) + MEMBERSHIP_TOL)
        return float(ok.mean())
    return float(np.mean([uset.contains(s) for s in S]))


def _order_statistic(values, k):
    """``k``-th smallest (1-based) under a stable sort; ``inf`` sorts last."""
    order = np.argsort(np.asarray(values, float), kind="stable")
    return float(np.asarray(values, float)[order[k - 1]])


def _radii(mu, cov, errors):
    Z = np.atleast_2d(np.asarray(errors, float)) - mu
    W = cho_solve(cho_factor(cov, lower=True), Z.T).T
    return np.einsum("ij,ij->i", Z, W)


def build_ellipsoid_set(u_hat, shape_errors, size_errors, eps, delta, box: BoxSet) -> EllipsoidCapSet:
    """Shape from one split, radius from the ``n*``-th smallest radius on the other."""
    u_hat = np.asarray(u_hat, float).ravel()
    size_errors = np.atleast_2d(np.asarray(size_errors, float))
    mu, cov = sample_moments(shape_errors)
    radii = _radii(mu, cov, size_errors)
    n_star = quantile_order_index(len(radii), eps, delta)
    alpha = _order_statistic(radii, n_star)
    return EllipsoidCapSet(box, u_hat + mu, cov, alpha, radii, n_star)


def build_ellipsoid_variant(u_hat, errors, mode: str, box: BoxSet, eps: float | None = None) -> EllipsoidCapSet:
    """Uncalibrated ellipsoids fitted on all ``errors``.

    ``mode="all"`` takes the largest radius; ``mode="fraction"`` the
    ``ceil((1 - eps) N)``-th smallest.
    """
    u_hat = np.asarray(u_hat, float).ravel()
    mu, cov = sample_moments(errors)
    radii = _radii(mu, cov, errors)
    if mode == "all":
        alpha = float(radii.max())
        k = len(radii)
    elif mode == "fraction":
        if eps is None or not 0 <= eps < 1:
            raise ValueError("fraction mode needs eps in [0, 1)")
        k = max(1, math.ceil((1 - eps) * len(radii) - 1e-12))
        alpha = _order_statistic(radii, k)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return EllipsoidCapSet(box, u_hat + mu, cov, alpha, radii, k)


def reconstruct_set(x0, u_hat, recon_errors, eps, delta, box: BoxSet, compact: CompactTwoStage,
                    backend: str | None = None) -> CostLevelSet:
    """Cost-level set anchored at ``x0``; ``beta`` is the ``n*``-th smallest re-dispatch cost."""
    u_hat = np.asarray(u_hat, float).ravel()
    x0 = np.asarray(x0, float).ravel()
    E = np.atleast_2d(np.asarray(recon_errors, float))
    n_star = quantile_order_index(len(E), eps, delta)
    b = np.array([redispatch_value(compact, x0, u_hat + e, backend=backend)[0] for e in E])
    beta = _order_statistic(b, n_star)
    return CostLevelSet(box, x0, beta, compact, b, n_star, backend)


@dataclass
class ErrorDataset:
    """Forecast errors, one row per day, with named chronological splits."""

    samples: np.ndarray
    days: list = None
    splits: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, float))
        if self.days is None:
            self.days = [str(k) for k in range(len(self.samples))]
        seen = set()
        for name, idx in self.splits.items():
            s = set(np.asarray(idx, int).tolist())
            if seen & s:
                raise ValueError(f"split {name!r} overlaps another split")
            seen |= s

    def split(self, name) -> np.ndarray:
        return self.samples[np.asarray(self.splits[name], int)]

    @classmethod
    def chronological(cls, samples, sizes: dict, days=None) -> "ErrorDataset":
        """Consecutive blocks in the order given by ``sizes``."""
        samples = np.atleast_2d(np.asarray(samples, float))
        total = sum(sizes.values())
        if total > len(samples):
            raise ValueError(f"splits need {total} rows but the dataset has {len(samples)}")
        splits, start = {}, 0
        for name, n in sizes.items():
            splits[name] = np.arange(start, start + n)
            start += n
        return cls(samples, days, splits)

    def to_csv(self, path, n_bus, horizon):
        write_wide_csv(path, self.days, self.samples, n_bus, horizon)

    @classmethod
    def from_csv(cls, path, n_cols=None) -> "ErrorDataset":
        days, rows = read_wide_csv(path, n_cols)
        return cls(rows, days)
