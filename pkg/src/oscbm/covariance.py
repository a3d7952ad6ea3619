"""Stationary correlation models and the integrals of their powers.

A model is a correlation function rho on R^d with rho(0) = 1.  The limit
variances of the oscillatory integrals are series in the integrals

    int rho(z)^q dz        and        int rho(z)^q |z|^(-beta) dz,

which are computed here by adaptive composite Gauss-Legendre quadrature on
a truncated domain plus an analytic bound for the discarded tail.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import InvalidBeta, NonIntegrable, ToleranceNotMet

KINDS = ("exponential", "gaussian", "table")


@dataclass(frozen=True)
class CovarianceModel:
    """A stationary correlation function.

    ``exponential``: rho(x) = exp(-rate * |x|)
    ``gaussian``:    rho(x) = exp(-(|x| / scale)^2)
    ``table``:       piecewise linear through ``(table_x, table_rho)`` and zero
                     beyond the last knot; ``decay_m`` is the declared m with
                     rho in L^m (``None`` means undeclared).
    """

    kind: str
    rate: float = 1.0
    scale: float = 1.0
    dim: int = 1
    table_x: tuple = ()
    table_rho: tuple = ()
    decay_m: Optional[int] = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        if self.dim not in (1, 2):
            raise ValueError("only dim 1 and 2 are supported")
        if self.kind == "exponential" and not self.rate > 0:
            raise ValueError("exponential rate must be > 0")
        if self.kind == "gaussian" and not self.scale > 0:
            raise ValueError("gaussian scale must be > 0")
        if self.kind == "table":
            x = np.asarray(self.table_x, dtype=float)
            r = np.asarray(self.table_rho, dtype=float)
            if self.dim != 1:
                raise ValueError("table covariances are 1-d only")
            if x.ndim != 1 or x.size < 2 or x.size != r.size:
                raise ValueError("table needs matching x and rho columns, at least 2 rows")
            if x[0] != 0.0 or np.any(np.diff(x) <= 0):
                raise ValueError("table x must start at 0 and be strictly increasing")
            if r[0] != 1.0:
                raise ValueError("table rho[0] must equal 1")
            if np.any(np.abs(r) > 1.0):
                raise ValueError("table |rho| must not exceed 1")

    @classmethod
    def exponential(cls, rate: float = 1.0, dim: int = 1) -> "CovarianceModel":
        return cls("exponential", rate=float(rate), dim=dim)

    @classmethod
    def gaussian(cls, scale: float = 1.0, dim: int = 1) -> "CovarianceModel":
        return cls("gaussian", scale=float(scale), dim=dim)

    @classmethod
    def table(cls, x, rho, decay_m: Optional[int] = None) -> "CovarianceModel":
        return cls("table", table_x=tuple(float(v) for v in x),
                   table_rho=tuple(float(v) for v in rho), decay_m=decay_m)

    @classmethod
    def from_csv(cls, path, decay_m: Optional[int] = None) -> "CovarianceModel":
        """Load a two-column ``x, rho`` table (a non-numeric header row is skipped)."""
        xs, rs = [], []
        with open(Path(path), newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    x, r = float(row[0]), float(row[1])
                except ValueError:
                    if xs:
                        raise
                    continue
                xs.append(x)
                rs.append(r)
        return cls.table(xs, rs, decay_m=decay_m)

    @property
    def correlation_length(self) -> float:
        """Length over which rho decays by O(1); sets grid resolution."""
        if self.kind == "exponential":
            return 1.0 / self.rate
        if self.kind == "gaussian":
            return self.scale
        x = np.asarray(self.table_x)
        r = np.asarray(self.table_rho)
        below = np.nonzero(np.abs(r) <= math.exp(-1.0))[0]
        return float(x[below[0]]) if below.size else float(x[-1])

    @property
    def support(self) -> float:
        """Radius beyond which rho vanishes identically (inf if never)."""
        return float(self.table_x[-1]) if self.kind == "table" else math.inf

    def radial(self, r):
        """rho as a function of the distance |x|."""
        r = np.abs(np.asarray(r, dtype=float))
        if self.kind == "exponential":
            return np.exp(-self.rate * r)
        if self.kind == "gaussian":
            return np.exp(-((r / self.scale) ** 2))
        return np.interp(r, self.table_x, self.table_rho, right=0.0)

    def __call__(self, x):
        return evaluate(self, x)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "dim": self.dim}
        if self.kind == "exponential":
            d["rate"] = self.rate
        elif self.kind == "gaussian":
            d["scale"] = self.scale
        else:
            d.update(x=list(self.table_x), rho=list(self.table_rho), decay_m=self.decay_m)
        return d


def evaluate(model: CovarianceModel, x):
    """rho(x).  In d=2 the last axis of ``x`` holds the coordinates."""
    x = np.asarray(x, dtype=float)
    if model.dim == 2 and x.ndim >= 1 and x.shape[-1] == 2:
        r = np.hypot(x[..., 0], x[..., 1])
    else:
        r = np.abs(x)
    out = model.radial(r)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class IntegralResult:
    value: float
    abs_error_estimate: float
    tail_bound: float
    domain_cutoff: float

    def __float__(self):
        return self.value


@dataclass(frozen=True)
class IntegrabilityReport:
    ok: bool
    reason: str


# -- quadrature ---------------------------------------------------------------

_GL_CACHE: dict = {}


def _gauss_legendre(order: int):
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


def adaptive_gauss_legendre(func: Callable, breakpoints, tol: float,
                            order: int = 20, max_panels: int = 20000):
    """Integrate ``func`` over [breakpoints[0], breakpoints[-1]].

    Each panel is accepted once the ``order``-point rule agrees with the sum
    over its two halves to within the panel's share of ``tol``.  Returns
    ``(value, error_estimate)``.
    """
    nodes, weights = _gauss_legendre(order)
    pts = np.asarray(breakpoints, dtype=float)
    total_len = pts[-1] - pts[0]
    if total_len <= 0:
        return 0.0, 0.0

    def rule(a, b):
        half = 0.5 * (b - a)
        return half * np.dot(weights, func(half * nodes + 0.5 * (a + b)))

    stack = [(a, b, rule(a, b)) for a, b in zip(pts[:-1], pts[1:]) if b > a]
    value = 0.0
    err = 0.0
    n_panels = 0
    while stack:
        a, b, whole = stack.pop()
        m = 0.5 * (a + b)
        left, right = rule(a, m), rule(m, b)
        diff = abs(left + right - whole)
        n_panels += 1
        budget = tol * (b - a) / total_len
        if diff <= budget or n_panels > max_panels or (b - a) < 1e-14 * total_len:
            value += left + right
            err += diff
        else:
            stack.append((a, m, left))
            stack.append((m, b, right))
    return float(value), float(err)


# -- tails ----------------------------------------------------------------------

def _tail_1d(model: CovarianceModel, q: int, L: float) -> float:
    """Bound on int_L^inf |rho(z)|^q dz (one side)."""
    if model.kind == "exponential":
        a = model.rate * q
        return math.exp(-a * L) / a
    if model.kind == "gaussian":
        c = q / model.scale ** 2
        # Mills ratio bound: int_L^inf e^{-c z^2} dz <= e^{-c L^2} / (2 c L)
        return math.exp(-c * L * L) / (2.0 * c * L)
    return 0.0 if L >= model.support else math.inf


def _tail_2d(model: CovarianceModel, q: int, L: float) -> float:
    """Bound on 2 pi int_L^inf |rho(r)|^q r dr."""
    if model.kind == "exponential":
        a = model.rate * q
        return 2.0 * math.pi * math.exp(-a * L) * (L / a + 1.0 / a ** 2)
    if model.kind == "gaussian":
        c = q / model.scale ** 2
        return math.pi * math.exp(-c * L * L) / c
    return 0.0 if L >= model.support else math.inf


def _cutoff(tail: Callable[[float], float], start: float, target: float) -> float:
    L = start
    for _ in range(80):
        if tail(L) < target:
            return L
        L *= 1.5
    raise ToleranceNotMet(f"tail bound did not drop below {target:g}")


def check_integrability(model: CovarianceModel, m: int) -> IntegrabilityReport:
    """Certify rho in L^m from the model's decay metadata."""
    if m < 1:
        return IntegrabilityReport(False, "m must be >= 1")
    if model.kind == "exponential":
        return IntegrabilityReport(True, "exponential decay")
    if model.kind == "gaussian":
        return IntegrabilityReport(True, "super-exponential decay")
    if model.decay_m is None:
        return IntegrabilityReport(False, "undeclared tail")
    if m < model.decay_m:
        return IntegrabilityReport(
            False, f"declared L^{model.decay_m} membership does not cover m={m}")
    return IntegrabilityReport(True, f"declared L^{model.decay_m}, compact table support")


def _require_integrable(model, q):
    rep = check_integrability(model, q)
    if not rep.ok:
        raise NonIntegrable(rep.reason)


def _panel_breaks(model: CovarianceModel, lo: float, hi: float):
    pts = [lo, hi]
    if model.kind == "table":
        pts += [x for x in model.table_x if lo < x < hi]
    else:
        # panel edges every correlation length keep the first pass informative
        ell = model.correlation_length
        k = int(min((hi - lo) / ell, 200))
        pts += list(np.linspace(lo, hi, k + 2)[1:-1])
    return sorted(set(pts))


def rho_power_integral(model: CovarianceModel, q: int, tol: float = 1e-10,
                       absolute: bool = False) -> IntegralResult:
    """int_{R^d} rho(z)^q dz (or |rho|^q when ``absolute``)."""
    if q < 1:
        raise ValueError("q must be >= 1")
    _require_integrable(model, q)

    def power(r):
        v = model.radial(r)
        return np.abs(v) ** q if absolute else v ** q

    order = max(20, q + 2)
    if model.dim == 1:
        tail = lambda L: 2.0 * _tail_1d(model, q, L)
        L = model.support if model.kind == "table" else _cutoff(tail, model.correlation_length, tol / 2)
        half, err = adaptive_gauss_legendre(power, _panel_breaks(model, 0.0, L), tol / 4, order)
        value, err = 2.0 * half, 2.0 * err
    else:
        tail = lambda L: _tail_2d(model, q, L)
        L = _cutoff(tail, model.correlation_length, tol / 2)
        value, err = adaptive_gauss_legendre(lambda r: 2.0 * math.pi * r * power(r),
                                             _panel_breaks(model, 0.0, L), tol / 2, order)
    tb = tail(L)
    if err + tb >= tol:
        raise ToleranceNotMet(f"error {err:.3g} + tail {tb:.3g} >= tol {tol:g}")
    return IntegralResult(value, err, tb, L)


def _weighted(model: CovarianceModel, q: int, beta: float, tol: float,
              absolute: bool = False) -> IntegralResult:
    """int_R rho(z)^q |z|^(-beta) dz for beta in [0, 1)."""
    _require_integrable(model, q)
    if model.dim != 1:
        raise ValueError("weighted integrals are implemented for d=1 only")
    gamma = 1.0 - beta

    def power(r):
        v = model.radial(r)
        return np.abs(v) ** q if absolute else v ** q

    order = max(20, q + 2)
    # near 0: z = u^(1/gamma) turns z^-beta dz into du / gamma
    z_split = min(1.0, model.support)
    u_hi = z_split ** gamma
    u_breaks = [0.0, u_hi]
    if model.kind == "table":
        u_breaks += [x ** gamma for x in model.table_x if 0.0 < x < z_split]
    near, err_near = adaptive_gauss_legendre(
        lambda u: power(u ** (1.0 / gamma)) / gamma, sorted(set(u_breaks)), tol / 8, order)

    if model.kind == "table":
        L = model.support
        tail = lambda L_: 0.0
    else:
        tail = lambda L_: 2.0 * L_ ** (-beta) * _tail_1d(model, q, L_)
        L = max(1.0, _cutoff(tail, max(1.0, model.correlation_length), tol / 2))
    far, err_far = 0.0, 0.0
    if L > z_split:
        far, err_far = adaptive_gauss_legendre(
            lambda z: power(z) * z ** (-beta), _panel_breaks(model, z_split, L), tol / 8, order)
    value = 2.0 * (near + far)
    err = 2.0 * (err_near + err_far)
    tb = tail(L)
    if err + tb >= tol:
        raise ToleranceNotMet(f"error {err:.3g} + tail {tb:.3g} >= tol {tol:g}")
    return IntegralResult(value, err, tb, L)


def rho_power_integral_weighted(model: CovarianceModel, q: int, beta: float,
                                tol: float = 1e-10, absolute: bool = False) -> IntegralResult:
    """int_R rho(z)^q |z|^(-beta) dz, 0 < beta < 1 (d=1)."""
    if not 0.0 < beta < 1.0:
        raise InvalidBeta(f"beta must lie in (0, 1), got {beta}")
    if q < 1:
        raise ValueError("q must be >= 1")
    return _weighted(model, q, beta, tol, absolute)
