"""The 1-d random elliptic problem with an explicitly solvable corrector.

    -(a(x/eps) u')' = f on [0, 1],   u(0) = 0,   u(1) = b,
    1 / a(x) = 1 / a* + Phi(W_x).

The solution is

    u_eps(x) = c_eps int_0^x 1/a(y/eps) dy - int_0^x F(y)/a(y/eps) dy,
    c_eps    = (b + int_0^1 F/a(./eps)) / int_0^1 1/a(./eps),

with F the antiderivative of f.  Every integral here is a midpoint sum on
one shared cell grid, so the algebraic identities between u_eps, the
homogenized solution and the corrector decomposition hold to roundoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .breuer_major import theoretical_sigma2
from .covariance import CovarianceModel, adaptive_gauss_legendre, rho_power_integral
from .errors import GridMismatch, NonAdmissible
from .gaussian_field import GridSpec, embedding_spectrum, sample_streams
from .hermite import Functional, HermiteExpansion, expand

DEFAULT_CELLS = 2048
DEFAULT_POINTS_PER_UNIT = 8


@dataclass(frozen=True)
class Source:
    """Right-hand side f.  Polynomials carry a closed-form antiderivative."""

    kind: str = "polynomial"
    coeffs: tuple = (0.0,)
    x: tuple = ()
    y: tuple = ()
    func: Optional[Callable] = field(default=None, compare=False)

    @classmethod
    def polynomial(cls, coeffs) -> "Source":
        return cls("polynomial", coeffs=tuple(float(c) for c in coeffs) or (0.0,))

    @classmethod
    def constant(cls, value: float) -> "Source":
        return cls.polynomial([value])

    @classmethod
    def table(cls, x, y) -> "Source":
        return cls("table", x=tuple(map(float, x)), y=tuple(map(float, y)))

    @classmethod
    def callable(cls, func: Callable) -> "Source":
        return cls("callable", func=func)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "polynomial":
            return np.polynomial.polynomial.polyval(x, self.coeffs) + 0.0 * x
        if self.kind == "table":
            return np.interp(x, self.x, self.y)
        return np.asarray(self.func(x), dtype=float)

    @property
    def has_closed_form(self) -> bool:
        return self.kind == "polynomial"

    def antiderivative(self, x):
        """F(x) = int_0^x f, closed form for polynomials, quadrature otherwise."""
        x = np.asarray(x, dtype=float)
        if self.has_closed_form:
            return np.polynomial.polynomial.polyval(
                x, np.polynomial.polynomial.polyint(self.coeffs))
        flat = np.atleast_1d(x).ravel()
        out = np.zeros(flat.shape)
        for i, xi in enumerate(flat):
            if xi > 0:
                pts = [0.0] + [k for k in self.x if 0 < k < xi] + [float(xi)]
                out[i] = adaptive_gauss_legendre(self, pts, 1e-13)[0]
        return out.reshape(x.shape) if x.ndim else float(out[0])

    def to_dict(self) -> dict:
        if self.kind == "polynomial":
            return {"kind": "polynomial", "coeffs": list(self.coeffs)}
        if self.kind == "table":
            return {"kind": "table", "x": list(self.x), "y": list(self.y)}
        return {"kind": "callable"}


@dataclass(frozen=True)
class CorrectorProblem:
    f: Source
    b: float
    a_star: float
    phi: Functional
    model: CovarianceModel
    epsilon: float
    cells: int = DEFAULT_CELLS
    points_per_unit: int = DEFAULT_POINTS_PER_UNIT

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in (0, 1]")
        if self.a_star == 0:
            raise ValueError("a_star must be nonzero")
        if self.model.dim != 1:
            raise ValueError("the corrector problem is 1-d")

    def with_epsilon(self, epsilon: float) -> "CorrectorProblem":
        return CorrectorProblem(self.f, self.b, self.a_star, self.phi, self.model,
                                epsilon, self.cells, self.points_per_unit)

    @property
    def n_cells(self) -> int:
        """Cells on [0, 1]: a multiple of ``cells`` that resolves the rescaled process."""
        need = self.points_per_unit / (self.epsilon * self.model.correlation_length)
        return self.cells * max(1, math.ceil(need / self.cells - 1e-12))

    @property
    def dx(self) -> float:
        return 1.0 / self.n_cells

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_cells + 1) * self.dx

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dx

    def field_grid(self) -> GridSpec:
        """Grid carrying W at the rescaled midpoints y_i / eps."""
        return GridSpec(self.n_cells, self.dx / self.epsilon, origin=0.5 * self.dx / self.epsilon)

    def F_mid(self) -> np.ndarray:
        """F at the cell midpoints, consistent with the cell grid."""
        y = self.midpoints
        if self.f.has_closed_form:
            return np.asarray(self.f.antiderivative(y), dtype=float)
        dx = self.dx
        at_nodes = np.concatenate([[0.0], np.cumsum(self.f(y)) * dx])[:-1]
        return at_nodes + 0.5 * dx * self.f(y - 0.25 * dx)

    def F(self, y):
        return self.f.antiderivative(y)

    @property
    def c_star(self) -> float:
        """b a* + int_0^1 F (continuum value)."""
        if self.f.has_closed_form:
            intF = float(np.polynomial.polynomial.polyval(
                1.0, np.polynomial.polynomial.polyint(self.f.coeffs, 2)))
        else:
            intF, _ = adaptive_gauss_legendre(self.F, [0.0] + [x for x in self.f.x if 0 < x < 1] + [1.0],
                                              1e-12, order=10)
        return self.b * self.a_star + intF

    @property
    def c_star_grid(self) -> float:
        return self.b * self.a_star + self.dx * float(np.sum(self.F_mid()))

    @property
    def denom_tol(self) -> float:
        return 1e-6 / abs(self.a_star)

    def to_dict(self) -> dict:
        return {"f": self.f.to_dict(), "b": self.b, "a_star": self.a_star,
                "phi": self.phi.to_dict(), "model": self.model.to_dict(),
                "epsilon": self.epsilon, "cells": self.n_cells}


@dataclass(frozen=True)
class CorrectorSolution:
    x: np.ndarray
    u_eps: np.ndarray
    u_bar: np.ndarray
    c_eps: float
    c_star: float
    admissible: bool
    denom: float


@dataclass(frozen=True)
class Decomposition:
    U_eps: np.ndarray
    r_eps: np.ndarray
    rho_term: np.ndarray
    residual: float


def _values(problem: CorrectorProblem, field) -> np.ndarray:
    grid = problem.field_grid()
    vals = np.asarray(getattr(field, "values", field), dtype=float)
    if vals.shape[-1] != grid.n_points:
        raise GridMismatch(f"field has {vals.shape[-1]} points, problem needs {grid.n_points}")
    fgrid = getattr(field, "grid", None)
    if fgrid is not None and not math.isclose(fgrid.spacing, grid.spacing, rel_tol=1e-12):
        raise GridMismatch(f"field spacing {fgrid.spacing} != required {grid.spacing}")
    return vals


def inverse_potential(problem: CorrectorProblem, field) -> np.ndarray:
    """1/a at the cell midpoints: 1/a* + Phi(W_{y_i/eps})."""
    return 1.0 / problem.a_star + problem.phi(_values(problem, field))


def homogenized(problem: CorrectorProblem):
    """(nodes, u_bar, c_star) with u_bar(x) = c* x / a* - int_0^x F / a*."""
    x = problem.nodes
    Fm = problem.F_mid()
    cumF = np.concatenate([[0.0], np.cumsum(Fm)]) * problem.dx
    c = problem.b * problem.a_star + cumF[-1]
    u_bar = (c * x - cumF) / problem.a_star
    u_bar[-1] = problem.b
    return x, u_bar, c


def _cum(a: np.ndarray, dx: float) -> np.ndarray:
    """Cumulative midpoint sums at the nodes, along the last axis."""
    out = np.zeros(a.shape[:-1] + (a.shape[-1] + 1,))
    np.cumsum(a, axis=-1, out=out[..., 1:])
    return out * dx


def _solve_batch(problem: CorrectorProblem, q: np.ndarray):
    """Vectorised solve; ``q`` holds Phi(W) with shape (batch, n_cells)."""
    dx = problem.dx
    Fm = problem.F_mid()
    inv_a = 1.0 / problem.a_star + q
    cum_inv = _cum(inv_a, dx)
    cum_F_inv = _cum(Fm * inv_a, dx)
    denom = cum_inv[:, -1]
    admissible = np.abs(denom) > problem.denom_tol
    safe = np.where(admissible, denom, 1.0)
    c_eps = (problem.b + cum_F_inv[:, -1]) / safe
    u = c_eps[:, None] * cum_inv - cum_F_inv
    u[~admissible] = np.nan
    return u, c_eps, denom, admissible


def solve_eps(problem: CorrectorProblem, field, raise_on_reject: bool = True) -> CorrectorSolution:
    """u_eps on the node grid from one field sample.

    Raises NonAdmissible when |int_0^1 1/a| <= denom_tol, unless
    ``raise_on_reject`` is False, in which case the solution comes back
    flagged with ``admissible=False``.
    """
    q = problem.phi(_values(problem, field))[None, :]
    u, c_eps, denom, ok = _solve_batch(problem, q)
    if not ok[0] and raise_on_reject:
        raise NonAdmissible(f"|int 1/a| = {abs(denom[0]):.3e} <= {problem.denom_tol:.3e}")
    x, u_bar, c = homogenized(problem)
    return CorrectorSolution(x, u[0], u_bar, float(c_eps[0]), c, bool(ok[0]), float(denom[0]))


def _decompose_batch(problem: CorrectorProblem, q, u, c_eps, denom):
    dx, eps = problem.dx, problem.epsilon
    x, u_bar, c = homogenized(problem)
    Fm = problem.F_mid()
    Q = _cum(q, dx)
    P = _cum(Fm * q, dx)
    Q1, P1 = Q[:, -1:], P[:, -1:]
    se = math.sqrt(eps)
    U = (c * Q - P + x * (P1 - c * Q1)) / se
    r = (c_eps[:, None] - c) * Q / se
    rho = x * (c * Q1 ** 2 - P1 * Q1) / denom[:, None]
    lhs = (u - u_bar) / se
    residual = np.max(np.abs(lhs - (U + r + rho / se)), axis=1)
    return lhs, U, r, rho, residual


def decompose(problem: CorrectorProblem, field, solution: CorrectorSolution) -> Decomposition:
    """(u_eps - u_bar)/sqrt(eps) = U_eps + r_eps + rho_eps/sqrt(eps) on the nodes."""
    if not solution.admissible:
        raise NonAdmissible("cannot decompose a non-admissible replication")
    q = problem.phi(_values(problem, field))[None, :]
    _, U, r, rho, res = _decompose_batch(problem, q, solution.u_eps[None, :],
                                         np.array([solution.c_eps]), np.array([solution.denom]))
    return Decomposition(U[0], r[0], rho[0], float(res[0]))


def kernel_F(problem: CorrectorProblem, x, y, c_star: Optional[float] = None):
    """F(x, y) = (c* - F(y)) 1_{[0,x]}(y) + x (F(y) - c*)."""
    c = problem.c_star if c_star is None else c_star
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    Fy = problem.F(y)
    out = (c - Fy) * (y <= x) + x * (Fy - c)
    return float(out) if np.ndim(out) == 0 else out


def limit_covariance(problem: CorrectorProblem, x1: float, x2: float, mu2: float) -> float:
    """mu^2 int_0^1 F(x1, s) F(x2, s) ds."""
    c = problem.c_star
    breaks = sorted({0.0, 1.0, float(x1), float(x2)} | {v for v in problem.f.x if 0 < v < 1})
    breaks = [b for b in breaks if 0.0 <= b <= 1.0]
    val, _ = adaptive_gauss_legendre(
        lambda s: kernel_F(problem, x1, s, c) * kernel_F(problem, x2, s, c), breaks, 1e-13)
    return mu2 * val


def mu2(problem: CorrectorProblem, exp: Optional[HermiteExpansion] = None):
    """The limit variance constant (a VarianceTarget) for ``problem``'s Phi and rho."""
    return theoretical_sigma2(exp if exp is not None else expand(problem.phi), problem.model)


def variance_bound(exp: HermiteExpansion, model: CovarianceModel, h_sup: float,
                   epsilon: float) -> float:
    """eps ||h||_inf^2 (sum q! c_q^2) int |rho|^m: a bound on Var int_0^v Phi(W_{y/eps}) h(y) dy."""
    m = exp.rank
    total = exp.norm2  # sum_{q>=m} q! c_q^2 = E[Phi^2] since c_0 = 0
    return epsilon * h_sup ** 2 * total * rho_power_integral(model, m, absolute=True).value


@dataclass
class CorrectorRun:
    """Per-replication observables from :func:`simulate_corrector`."""

    x_obs: np.ndarray
    rescaled: np.ndarray     # (N, k): (u_eps - u_bar)/sqrt(eps) at x_obs
    abs_error: np.ndarray    # (N, k): |u_eps - u_bar| at x_obs
    U: np.ndarray
    r: np.ndarray
    rho_scaled: np.ndarray   # rho_eps / sqrt(eps)
    residual: np.ndarray     # (N,)
    admissible: np.ndarray   # (N,) bool
    u_eps_end: np.ndarray    # (N,) u_eps(1)

    @property
    def n_rejected(self) -> int:
        return int(np.count_nonzero(~self.admissible))


def node_indices(problem: CorrectorProblem, x_obs) -> np.ndarray:
    idx = np.rint(np.asarray(x_obs, dtype=float) * problem.n_cells).astype(int)
    if np.any(np.abs(idx * problem.dx - np.asarray(x_obs)) > 1e-12):
        raise GridMismatch(f"observation points {x_obs} are not grid nodes")
    return idx


def simulate_corrector(problem: CorrectorProblem, n_reps: int, seed: int, x_obs,
                       batch: int = 128, start: int = 0) -> CorrectorRun:
    """Replications ``start .. start+n_reps-1``; replication i uses field stream i."""
    grid = problem.field_grid()
    spectrum = embedding_spectrum(problem.model, grid)
    idx = node_indices(problem, x_obs)
    _, u_bar, _ = homogenized(problem)
    se = math.sqrt(problem.epsilon)
    k = idx.size
    cols = {name: np.empty((n_reps, k)) for name in ("rescaled", "abs_error", "U", "r", "rho")}
    residual = np.empty(n_reps)
    admissible = np.empty(n_reps, dtype=bool)
    u_end = np.empty(n_reps)
    for b0 in range(0, n_reps, batch):
        nb = min(batch, n_reps - b0)
        q = problem.phi(sample_streams(spectrum, grid, seed, start + b0, nb))
        u, c_eps, denom, ok = _solve_batch(problem, q)
        lhs, U, r, rho, res = _decompose_batch(problem, q, u, c_eps, np.where(ok, denom, 1.0))
        sl = slice(b0, b0 + nb)
        cols["rescaled"][sl] = lhs[:, idx]
        cols["abs_error"][sl] = np.abs(u[:, idx] - u_bar[idx])
        cols["U"][sl] = U[:, idx]
        cols["r"][sl] = r[:, idx]
        cols["rho"][sl] = rho[:, idx] / se
        residual[sl] = np.where(ok, res, np.nan)
        admissible[sl] = ok
        u_end[sl] = u[:, -1]
    return CorrectorRun(np.asarray(x_obs, dtype=float), cols["rescaled"], cols["abs_error"],
                        cols["U"], cols["r"], cols["rho"], residual, admissible, u_end)


def simulate_weighted_integrals(problem: CorrectorProblem, h, v_points, n_reps: int, seed: int,
                                batch: int = 128, start: int = 0) -> np.ndarray:
    """int_0^v Phi(W_{y/eps}) h(y) dy for each v in ``v_points``; shape (n_reps, len(v)).

    Midpoint sums on the problem's cell grid with the same field streams as
    :func:`simulate_corrector`.
    """
    grid = problem.field_grid()
    spectrum = embedding_spectrum(problem.model, grid)
    idx = node_indices(problem, v_points)
    hy = h(problem.midpoints) * problem.dx
    out = np.empty((n_reps, idx.size))
    for b0 in range(0, n_reps, batch):
        nb = min(batch, n_reps - b0)
        q = problem.phi(sample_streams(spectrum, grid, seed, start + b0, nb))
        cum = _cum(q * hy, 1.0)
        out[b0: b0 + nb] = cum[:, idx]
    return out
