"""Oscillatory integrals of Phi(W) and their limiting variances.

For a bounded set B and weight h,

    G_R(B) = R^(d/2) * int_B Phi(W_{xR}) h(x) dx

is approximated by a midpoint rule on a grid in x; the process is sampled at
the rescaled midpoints x_i * R.  As R grows, G_R is asymptotically centered
Gaussian with covariance sigma^2 * int_{B_i & B_j} h^2, where

    sigma^2 = sum_{q >= m} q! c_q^2 int rho(z)^q dz.

The homogeneous-measure variant replaces h(x) dx by |x|^(-beta) dx (d=1) and
R^(d/2) by R^(alpha/2), alpha = 1 - beta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import matmul_toeplitz

from .covariance import (CovarianceModel, adaptive_gauss_legendre, check_integrability,
                         rho_power_integral, rho_power_integral_weighted)
from .errors import GridMismatch, InvalidBeta, NonIntegrable
from .gaussian_field import GridSpec, embedding_spectrum, sample_streams
from .hermite import Functional, HermiteExpansion, expand

DEFAULT_POINTS_PER_UNIT = 8
MIN_CELLS = 1024


# -- weights and sets -----------------------------------------------------------

@dataclass(frozen=True)
class Weight:
    """A weight function h.  ``table`` weights interpolate linearly or as steps."""

    kind: str = "constant"
    value: float = 1.0
    coeffs: tuple = ()
    x: tuple = ()
    y: tuple = ()
    interp: str = "linear"
    func: Optional[Callable] = field(default=None, compare=False)

    @classmethod
    def constant(cls, value: float = 1.0) -> "Weight":
        return cls("constant", value=float(value))

    @classmethod
    def polynomial(cls, coeffs) -> "Weight":
        return cls("polynomial", coeffs=tuple(float(c) for c in coeffs))

    @classmethod
    def table(cls, x, y, interp: str = "linear") -> "Weight":
        if interp not in ("linear", "step"):
            raise ValueError("interp must be 'linear' or 'step'")
        return cls("table", x=tuple(map(float, x)), y=tuple(map(float, y)), interp=interp)

    @classmethod
    def callable(cls, func: Callable) -> "Weight":
        return cls("callable", func=func)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            shape = x.shape[:-1] if (x.ndim >= 1 and x.shape[-1] == 2 and x.ndim > 1) else x.shape
            return np.full(shape, self.value)
        if self.kind == "polynomial":
            return np.polynomial.polynomial.polyval(x, self.coeffs)
        if self.kind == "table":
            if self.interp == "linear":
                return np.interp(x, self.x, self.y)
            idx = np.clip(np.searchsorted(self.x, x, side="right") - 1, 0, len(self.y) - 1)
            return np.asarray(self.y)[idx]
        return np.asarray(self.func(x), dtype=float)

    @property
    def breakpoints(self) -> tuple:
        return self.x if self.kind == "table" else ()

    def scaled(self, kappa: float) -> "Weight":
        if self.kind == "callable":
            f = self.func
            return Weight.callable(lambda x: kappa * np.asarray(f(x)))
        if self.kind == "constant":
            return Weight.constant(kappa * self.value)
        if self.kind == "polynomial":
            return Weight.polynomial([kappa * c for c in self.coeffs])
        return Weight.table(self.x, [kappa * v for v in self.y], self.interp)

    def sup_norm(self, lo: float, hi: float, n: int = 4001) -> float:
        """max |h| over [lo, hi] on a dense grid plus the table knots."""
        pts = np.concatenate([np.linspace(lo, hi, n),
                              [b for b in self.breakpoints if lo <= b <= hi]])
        return float(np.max(np.abs(self(pts))))

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        if self.kind == "polynomial":
            return {"kind": "polynomial", "coeffs": list(self.coeffs)}
        if self.kind == "table":
            return {"kind": "table", "x": list(self.x), "y": list(self.y), "interp": self.interp}
        return {"kind": "callable"}


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.hi >= self.lo:
            raise ValueError("interval needs lo <= hi")

    dim = 1

    def contains(self, x):
        x = np.asarray(x)
        return (x >= self.lo) & (x <= self.hi)

    def bounds(self):
        return (self.lo,), (self.hi,)


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    dim = 2

    def contains(self, x):
        x = np.asarray(x)
        return np.all((x >= np.asarray(self.lo)) & (x <= np.asarray(self.hi)), axis=-1)

    def bounds(self):
        return tuple(self.lo), tuple(self.hi)


@dataclass(frozen=True)
class Ball:
    """Closed ball {|x| <= radius} centred at the origin."""

    radius: float
    dim: int = 1

    def contains(self, x):
        x = np.asarray(x)
        r = np.abs(x) if self.dim == 1 else np.linalg.norm(x, axis=-1)
        return r <= self.radius

    def bounds(self):
        return (-self.radius,) * self.dim, (self.radius,) * self.dim


def as_set(obj, dim: int = 1):
    """Accept Interval/Box/Ball or a plain ``(lo, hi)`` pair."""
    if isinstance(obj, (Interval, Box, Ball)):
        return obj
    lo, hi = obj
    if dim == 1:
        return Interval(float(lo), float(hi))
    return Box(tuple(map(float, lo)), tuple(map(float, hi)))


def _as_interval(s) -> Interval:
    if isinstance(s, Ball):
        return Interval(-s.radius, s.radius)
    return s


# -- grids ------------------------------------------------------------------------

def _aligned_cells(lo: float, hi: float, n_min: int, marks) -> int:
    """Smallest n >= n_min (up to 2 n_min) whose nodes hit every mark."""
    extent = hi - lo
    for n in range(n_min, 2 * n_min + 1):
        pos = [(m - lo) * n / extent for m in marks]
        if all(abs(p - round(p)) < 1e-9 for p in pos):
            return n
    return n_min


def cell_width(model: CovarianceModel, R: float, extent: float,
               points_per_unit: int = DEFAULT_POINTS_PER_UNIT,
               min_cells: int = MIN_CELLS) -> float:
    """x-step so the rescaled process gets ``points_per_unit`` points per correlation length."""
    return min(model.correlation_length / (points_per_unit * R), extent / min_cells)


@dataclass(frozen=True)
class OscillatorySpec:
    model: CovarianceModel
    phi: Functional
    sets: tuple
    R: float
    h: Weight = Weight.constant(1.0)
    points_per_unit: int = DEFAULT_POINTS_PER_UNIT
    min_cells: int = MIN_CELLS

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("R must be > 0")
        object.__setattr__(self, "sets", tuple(as_set(s, self.dim) for s in self.sets))
        if not self.sets:
            raise ValueError("at least one set is required")

    @property
    def dim(self) -> int:
        return self.model.dim

    def x_grid(self):
        """(lo, dx, n) for each axis: midpoints lo + (i + 1/2) dx, i < n."""
        los = np.min([s.bounds()[0] for s in self.sets], axis=0)
        his = np.max([s.bounds()[1] for s in self.sets], axis=0)
        axes = []
        for k in range(self.dim):
            lo, hi = float(los[k]), float(his[k])
            extent = hi - lo
            dx = cell_width(self.model, self.R, extent, self.points_per_unit, self.min_cells)
            marks = set()
            for s in self.sets:
                b = s.bounds()
                marks.update((b[0][k], b[1][k]))
            if isinstance(self, HomogeneousSpec) or any(isinstance(s, Ball) for s in self.sets):
                marks.add(0.0)
            n = _aligned_cells(lo, hi, int(math.ceil(extent / dx)), marks)
            axes.append((lo, extent / n, n))
        if self.dim == 2 and axes[0][1:] != axes[1][1:]:
            # the field grid is square; use the finer step on both axes
            dx = min(a[1] for a in axes)
            n = max(int(round((his[k] - los[k]) / dx)) for k in range(2))
            axes = [(float(los[k]), dx, n) for k in range(2)]
        return axes

    def midpoints(self):
        axes = self.x_grid()
        if self.dim == 1:
            lo, dx, n = axes[0]
            return lo + (np.arange(n) + 0.5) * dx
        (lo0, dx, n), (lo1, _, _) = axes
        g0 = lo0 + (np.arange(n) + 0.5) * dx
        g1 = lo1 + (np.arange(n) + 0.5) * dx
        return np.stack(np.meshgrid(g0, g1, indexing="ij"), axis=-1)

    def field_grid(self) -> GridSpec:
        lo, dx, n = self.x_grid()[0]
        return GridSpec(n, dx * self.R, origin=(lo + 0.5 * dx) * self.R, dim=self.dim)

    def set_weights(self) -> np.ndarray:
        """Matrix (n_cells, n_sets) with R^(d/2) h(x_i) dx^d 1_B(x_i)."""
        x = self.midpoints()
        dx = self.x_grid()[0][1]
        hx = self.h(x)
        cols = [np.where(s.contains(x), hx, 0.0).ravel() for s in self.sets]
        return np.stack(cols, axis=1) * (self.R ** (self.dim / 2) * dx ** self.dim)


@dataclass(frozen=True)
class HomogeneousSpec(OscillatorySpec):
    """Balls B_t = [-t, t] integrated against nu(dx) = |x|^(-beta) dx (d=1)."""

    beta: float = 0.5
    unit_weight: bool = False  # test hook: replace nu by Lebesgue measure

    def __post_init__(self):
        super().__post_init__()
        if self.dim != 1:
            raise ValueError("homogeneous variant is implemented for d=1")
        if not self.unit_weight and not 0.0 < self.beta < 1.0:
            raise InvalidBeta(f"beta must lie in (0, 1), got {self.beta}")

    @classmethod
    def balls(cls, model, phi, radii: Sequence[float], R: float, beta: float, **kw):
        return cls(model, phi, tuple(Ball(float(t)) for t in radii), R, beta=beta, **kw)

    @property
    def alpha(self) -> float:
        return 1.0 if self.unit_weight else 1.0 - self.beta

    def set_weights(self) -> np.ndarray:
        lo, dx, n = self.x_grid()[0]
        edges = lo + dx * np.arange(n + 1)
        mids = 0.5 * (edges[1:] + edges[:-1])
        mass = np.diff(edges) if self.unit_weight else cell_masses(edges, self.beta)
        cols = [np.where(_as_interval(s).contains(mids), mass, 0.0) for s in self.sets]
        return np.stack(cols, axis=1) * self.R ** (self.alpha / 2)


def nu_antiderivative(x, beta: float):
    """sign(x) |x|^(1-beta) / (1-beta): an antiderivative of |x|^(-beta)."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.abs(x) ** (1.0 - beta) / (1.0 - beta)


def nu_mass(a: float, b: float, beta: float) -> float:
    """nu([a, b]) for nu(dx) = |x|^(-beta) dx."""
    if not 0.0 < beta < 1.0:
        raise InvalidBeta(f"beta must lie in (0, 1), got {beta}")
    return float(nu_antiderivative(b, beta) - nu_antiderivative(a, beta))


def cell_masses(edges, beta: float) -> np.ndarray:
    """Exact nu-masses of the cells between consecutive ``edges``."""
    return np.diff(nu_antiderivative(edges, beta))


# -- estimators -------------------------------------------------------------------

def oscillatory_integral(spec: OscillatorySpec, field) -> dict:
    """Midpoint-rule G_R(B) for each set, from one field sample on ``spec.field_grid()``."""
    grid = spec.field_grid()
    values = np.asarray(getattr(field, "values", field), dtype=float)
    fgrid = getattr(field, "grid", None)
    if fgrid is not None and (fgrid.n_points != grid.n_points
                              or not math.isclose(fgrid.spacing, grid.spacing, rel_tol=1e-12)):
        raise GridMismatch(f"field grid {fgrid} does not match required {grid}")
    if values.shape != grid.shape:
        raise GridMismatch(f"field shape {values.shape} != required {grid.shape}")
    g = spec.phi(values).ravel() @ spec.set_weights()
    return {i: float(v) for i, v in enumerate(g)}


def homogeneous_oscillatory_integral(spec: HomogeneousSpec, field) -> dict:
    """R^(alpha/2) sum_i Phi(W_i) nu(cell_i) over each ball, keyed by radius."""
    vals = oscillatory_integral(spec, field)
    return {_as_interval(s).hi: vals[i] for i, s in enumerate(spec.sets)}


def simulate(spec: OscillatorySpec, n_reps: int, seed: int, batch: int = 256,
             start: int = 0) -> np.ndarray:
    """G_R(B_j) for replications ``start .. start+n_reps-1``; shape (n_reps, n_sets).

    Replication ``i`` uses field stream ``i``; batches are reduced in index order.
    """
    grid = spec.field_grid()
    spectrum = embedding_spectrum(spec.model, grid)
    weights = spec.set_weights()
    out = np.empty((n_reps, weights.shape[1]))
    for b0 in range(0, n_reps, batch):
        k = min(batch, n_reps - b0)
        fields = sample_streams(spectrum, grid, seed, start + b0, k)
        out[b0: b0 + k] = spec.phi(fields).reshape(k, -1) @ weights
    return out


# -- theoretical targets --------------------------------------------------------------

@dataclass(frozen=True)
class VarianceTarget:
    """A series value with its certified error budget."""

    value: float
    error_budget: float
    terms: tuple = ()

    def __float__(self):
        return self.value


def _series(exp: HermiteExpansion, integral: Callable[[int, bool], object]) -> VarianceTarget:
    if exp.rank is None:
        return VarianceTarget(0.0, max(exp.tail_mass, 0.0) * 0.0, ())
    chaos = exp.chaos_variances()
    value, budget, terms = 0.0, 0.0, []
    for q in range(exp.rank, exp.Q + 1):
        if chaos[q] == 0.0:
            continue
        res = integral(q, False)
        value += chaos[q] * res.value
        budget += chaos[q] * (res.abs_error_estimate + res.tail_bound)
        terms.append((q, float(chaos[q] * res.value)))
    if exp.tail_mass > 0:
        budget += exp.tail_mass * integral(exp.rank, True).value
    return VarianceTarget(float(value), float(budget), tuple(terms))


def _as_expansion(exp) -> HermiteExpansion:
    return expand(exp) if isinstance(exp, Functional) else exp


def theoretical_sigma2(exp, model: CovarianceModel, tol: float = 1e-10) -> VarianceTarget:
    """sum_{q=m}^{Q} q! c_q^2 int rho^q, plus tail_mass * int |rho|^m in the budget."""
    exp = _as_expansion(exp)
    if exp.rank is not None:
        rep = check_integrability(model, exp.rank)
        if not rep.ok:
            raise NonIntegrable(rep.reason)
    return _series(exp, lambda q, a: rho_power_integral(model, q, tol, absolute=a))


def theoretical_sigma2_nu(exp, model: CovarianceModel, beta: float,
                          tol: float = 1e-10) -> VarianceTarget:
    """sum q! c_q^2 int rho(z)^q |z|^(-beta) dz with the same tail policy."""
    exp = _as_expansion(exp)
    if not 0.0 < beta < 1.0:
        raise InvalidBeta(f"beta must lie in (0, 1), got {beta}")
    if exp.rank is not None:
        rep = check_integrability(model, exp.rank)
        if not rep.ok:
            raise NonIntegrable(rep.reason)
    return _series(exp, lambda q, a: rho_power_integral_weighted(model, q, beta, tol, absolute=a))


def _h2_integral(h: Weight, s: Interval, tol: float = 1e-12) -> float:
    if s.hi <= s.lo:
        return 0.0
    pts = [s.lo, s.hi] + [b for b in h.breakpoints if s.lo < b < s.hi]
    val, _ = adaptive_gauss_legendre(lambda x: h(x) ** 2, sorted(pts), tol)
    return val


def overlap_h2(a, b, h: Weight, dim: int = 1, n2d: int = 1500) -> float:
    """int_{A & B} h(x)^2 dx."""
    if dim == 1:
        a, b = _as_interval(a), _as_interval(b)
        return _h2_integral(h, Interval(max(a.lo, b.lo), max(min(a.hi, b.hi), max(a.lo, b.lo))))
    lo = np.maximum(a.bounds()[0], b.bounds()[0])
    hi = np.minimum(a.bounds()[1], b.bounds()[1])
    if np.any(hi <= lo):
        return 0.0
    if isinstance(a, Box) and isinstance(b, Box) and h.kind == "constant":
        return float(h.value ** 2 * np.prod(hi - lo))
    # tensor midpoint rule over the bounding box of the intersection
    g = [lo[k] + (np.arange(n2d) + 0.5) * (hi[k] - lo[k]) / n2d for k in range(2)]
    pts = np.stack(np.meshgrid(*g, indexing="ij"), axis=-1)
    inside = a.contains(pts) & b.contains(pts)
    cell = np.prod((hi - lo) / n2d)
    return float(np.sum(np.where(inside, h(pts) ** 2, 0.0)) * cell)


def limit_fdd_covariance(sets, h: Weight, sigma2: float, dim: int = 1) -> np.ndarray:
    """Matrix sigma^2 * int_{B_i & B_j} h^2."""
    sets = [as_set(s, dim) for s in sets]
    k = len(sets)
    out = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            out[i, j] = out[j, i] = sigma2 * overlap_h2(sets[i], sets[j], h, dim)
    return out


def finite_R_variance(exp, model: CovarianceModel, interval, R: float,
                      h: Weight = Weight.constant(1.0), tol: float = 1e-10) -> float:
    """Exact Var G_R([a, b]) of the continuum integral (d=1).

    Var = sum_q q! c_q^2 R int rho(R z)^q K(z) dz with
    K(z) = int_{B & (B+z)} h(x) h(x - z) dx.
    """
    exp = _as_expansion(exp)
    s = _as_interval(as_set(interval))
    ell = s.hi - s.lo
    t, wt = np.polynomial.legendre.leggauss(40)

    def kernel(z):
        z = np.atleast_1d(z)
        if h.kind == "constant":
            return h.value ** 2 * (ell - z)
        a = s.lo + z
        half = 0.5 * (s.hi - a)
        x = 0.5 * (s.hi + a)[:, None] + half[:, None] * t
        return (half[:, None] * wt * h(x) * h(x - z[:, None])).sum(axis=1)

    # geometric panels resolve the 1/R-wide peak of rho(R z) at z = 0
    L = min(ell, model.support / R)
    breaks = sorted({0.0, L} | {c / R for c in np.geomspace(1e-3, 1e3, 25) if c / R < L})
    chaos = exp.chaos_variances()
    total = 0.0
    for q in range(1, exp.Q + 1):
        if chaos[q] == 0.0:
            continue
        val, _ = adaptive_gauss_legendre(
            lambda z: R * model.radial(R * z) ** q * kernel(z), breaks, tol)
        total += chaos[q] * 2.0 * val
    return total


def discrete_covariance(spec: OscillatorySpec, exp=None) -> np.ndarray:
    """Exact covariance of the midpoint-rule estimators on ``spec``'s grid (d=1).

    Var of sum_i w_i Phi(W_i) is sum_q q! c_q^2 w^T [rho(x_i - x_j)^q] w, evaluated
    with Toeplitz products; the chaos series is truncated at the expansion's Q.
    """
    if spec.dim != 1:
        raise ValueError("discrete_covariance is implemented for d=1")
    exp = _as_expansion(spec.phi if exp is None else exp)
    grid = spec.field_grid()
    w = spec.set_weights()
    lags = grid.spacing * np.arange(grid.n_points)
    chaos = exp.chaos_variances()
    cov = np.zeros((w.shape[1], w.shape[1]))
    for q in range(1, exp.Q + 1):
        if chaos[q] == 0.0:
            continue
        col = spec.model.radial(lags) ** q
        cov += chaos[q] * (w.T @ matmul_toeplitz((col, col), w))
    return cov


def mes_diagnostic(increments: dict, p: float = 4.0, slack: float = 1.25) -> dict:
    """Check (E|X(t)-X(s)|^p)^(1/p) <= C sqrt(t-s) across separations.

    ``increments`` maps a separation t-s to an array of sampled increments.
    C is fitted on the largest separation; each finer separation must satisfy
    the bound with multiplicative ``slack``.
    """
    seps = sorted(increments, reverse=True)
    norms = {d: float(np.mean(np.abs(increments[d]) ** p) ** (1.0 / p)) for d in seps}
    C = norms[seps[0]] / math.sqrt(seps[0])
    ratios = {d: norms[d] / (C * math.sqrt(d)) for d in seps}
    return {"C": C, "norms": norms, "ratios": ratios,
            "ok": all(r <= slack for r in ratios.values())}
