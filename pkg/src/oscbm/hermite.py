"""Probabilists' Hermite polynomials and chaos expansions of functionals.

A functional Phi of a standard normal N is expanded as

    Phi = sum_q c_q H_q,        c_q = E[Phi(N) H_q(N)] / q!,

and its Hermite rank is the first q >= 1 with c_q != 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import hermite_e

from .errors import NonCentered, QuadratureUnstable, RankUndetected

DEFAULT_Q = 24
COEFF_TOL = 1e-10
RANK_TOL = 1e-8
CENTER_TOL = 1e-8
QUAD_HALF_WIDTH = 40.0

FUNCTIONAL_KINDS = ("polynomial", "abs_centered", "sign", "hermite_single", "user")


def hermite_eval(q: int, x):
    """H_q(x) by the three-term recurrence H_{k+1} = x H_k - k H_{k-1}."""
    if q < 0:
        raise ValueError("q must be >= 0")
    x = np.asarray(x, dtype=float)
    prev, cur = np.ones_like(x), x.copy()
    if q == 0:
        return prev if prev.ndim else float(prev)
    for k in range(1, q):
        prev, cur = cur, x * cur - k * prev
    return cur if cur.ndim else float(cur)


def normalized_hermite_table(Q: int, x) -> np.ndarray:
    """Rows k = 0..Q of H_k(x) / sqrt(k!), shape (Q+1, len(x))."""
    x = np.asarray(x, dtype=float)
    out = np.empty((Q + 1,) + x.shape)
    out[0] = 1.0
    if Q >= 1:
        out[1] = x
    for k in range(1, Q):
        out[k + 1] = (x * out[k] - math.sqrt(k) * out[k - 1]) / math.sqrt(k + 1)
    return out


@dataclass(frozen=True)
class Functional:
    """A function Phi of one real variable with the metadata the expansions need.

    ``breakpoints`` lists points where Phi is not smooth; quadrature splits
    there.  ``p_claim`` is the claimed L^p(gamma) exponent.
    """

    kind: str
    coeffs: tuple = ()
    q: int = 0
    func: Optional[Callable] = field(default=None, compare=False)
    p_claim: float = math.inf
    breakpoints: tuple = ()
    name: str = ""

    def __post_init__(self):
        if self.kind not in FUNCTIONAL_KINDS:
            raise ValueError(f"unknown functional kind {self.kind!r}")
        if self.kind == "user" and (self.func is None or not math.isfinite(self.p_claim)):
            raise ValueError("user functionals need a callable and an explicit finite p_claim")
        if self.p_claim < 2:
            raise ValueError("p_claim must be >= 2")

    @classmethod
    def polynomial(cls, coeffs, name: str = "") -> "Functional":
        """Power-basis coefficients, lowest degree first."""
        return cls("polynomial", coeffs=tuple(float(c) for c in coeffs) or (0.0,),
                   name=name or "polynomial")

    @classmethod
    def zero(cls) -> "Functional":
        return cls.polynomial([0.0], name="zero")

    @classmethod
    def abs_centered(cls) -> "Functional":
        return cls("abs_centered", breakpoints=(0.0,), name="abs_centered")

    @classmethod
    def sign(cls) -> "Functional":
        return cls("sign", breakpoints=(0.0,), name="sign")

    @classmethod
    def hermite_single(cls, q: int) -> "Functional":
        if q < 0:
            raise ValueError("q must be >= 0")
        return cls("hermite_single", q=int(q), name=f"H{q}")

    @classmethod
    def user(cls, func: Callable, p_claim: float, breakpoints=(), name: str = "user"):
        return cls("user", func=func, p_claim=float(p_claim),
                   breakpoints=tuple(float(b) for b in breakpoints), name=name)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "polynomial":
            return np.polynomial.polynomial.polyval(x, self.coeffs) + 0.0 * x
        if self.kind == "abs_centered":
            return np.abs(x) - math.sqrt(2.0 / math.pi)
        if self.kind == "sign":
            return np.sign(x)
        if self.kind == "hermite_single":
            return hermite_eval(self.q, x)
        return np.asarray(self.func(x), dtype=float)

    @property
    def is_polynomial(self) -> bool:
        return self.kind in ("polynomial", "hermite_single")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "polynomial":
            d["coeffs"] = list(self.coeffs)
        elif self.kind == "hermite_single":
            d["q"] = self.q
        elif self.kind == "user":
            d["name"] = self.name
            d["p_claim"] = self.p_claim
        return d


@dataclass(frozen=True)
class HermiteExpansion:
    coefficients: np.ndarray
    rank: Optional[int]
    Q: int
    parseval_norm: float
    tail_mass: float
    norm2: float

    def to_json(self) -> dict:
        return {
            "coefficients": [float(c) for c in self.coefficients],
            "rank": self.rank,
            "Q": self.Q,
            "parseval_norm": float(self.parseval_norm),
            "tail_mass": float(self.tail_mass),
        }

    def chaos_variances(self) -> np.ndarray:
        """q! c_q^2 for q = 0..Q."""
        q = np.arange(self.Q + 1)
        fact = np.array([math.factorial(int(k)) for k in q], dtype=float)
        return fact * self.coefficients ** 2


def _gaussian_rule(phi: Functional, order: int):
    """Nodes and weights integrating against the standard normal density."""
    if not phi.breakpoints:
        x, w = hermite_e.hermegauss(order)
        return x, w / math.sqrt(2.0 * math.pi)
    edges = set(np.arange(-QUAD_HALF_WIDTH, QUAD_HALF_WIDTH + 1.0))
    edges.update(b for b in phi.breakpoints if abs(b) < QUAD_HALF_WIDTH)
    edges = np.array(sorted(edges))
    t, wt = np.polynomial.legendre.leggauss(order)
    half = 0.5 * np.diff(edges)[:, None]
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    x = (mid + half * t).ravel()
    w = (half * wt).ravel() * np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return x, w


def _quadrature_coefficients(phi: Functional, Q: int, order: int):
    x, w = _gaussian_rule(phi, order)
    vals = phi(x)
    table = normalized_hermite_table(Q, x)
    sqrt_fact = np.sqrt([float(math.factorial(k)) for k in range(Q + 1)])
    coeffs = (table @ (w * vals)) / sqrt_fact
    norm2 = float(np.dot(w, vals * vals))
    return coeffs, norm2


def hermite_rank(exp: HermiteExpansion, rank_tol: float = RANK_TOL) -> int:
    """Smallest q >= 1 with |c_q| > rank_tol."""
    big = np.nonzero(np.abs(exp.coefficients[1:]) > rank_tol)[0]
    if big.size == 0:
        raise RankUndetected(f"all |c_q| <= {rank_tol:g} for 1 <= q <= {exp.Q}")
    return int(big[0]) + 1


def expand(phi: Functional, Q: int = DEFAULT_Q, quad_order: Optional[int] = None,
           coeff_tol: float = COEFF_TOL, center_tol: float = CENTER_TOL,
           rank_tol: float = RANK_TOL) -> HermiteExpansion:
    """Hermite coefficients c_0..c_Q of ``phi``.

    Polynomials are converted to the Hermite basis exactly.  Otherwise the
    coefficients come from a Gaussian quadrature of order ``quad_order``
    (default 2Q+32) confirmed at order ``quad_order + 32``.  A functional
    whose expansion has no coefficient above ``rank_tol`` gets ``rank=None``.
    """
    if Q < 1:
        raise ValueError("Q must be >= 1")
    if quad_order is None:
        quad_order = 2 * Q + 32
    if quad_order < 2 * Q + 16:
        raise ValueError("quad_order must be >= 2Q+16")

    if phi.is_polynomial:
        if phi.kind == "hermite_single":
            full = np.zeros(phi.q + 1)
            full[phi.q] = 1.0
        else:
            full = hermite_e.poly2herme(np.asarray(phi.coeffs, dtype=float))
        fact = np.array([float(math.factorial(k)) for k in range(full.size)])
        norm2 = float(np.sum(fact * full ** 2))
        coeffs = np.zeros(Q + 1)
        coeffs[: min(Q + 1, full.size)] = full[: Q + 1]
    else:
        coeffs, norm2 = _quadrature_coefficients(phi, Q, quad_order)
        check, _ = _quadrature_coefficients(phi, Q, quad_order + 32)
        gap = float(np.max(np.abs(coeffs - check)))
        if gap > coeff_tol:
            raise QuadratureUnstable(
                f"coefficients moved by {gap:.3e} between orders {quad_order} and {quad_order + 32}")

    if abs(coeffs[0]) > center_tol:
        raise NonCentered(f"c_0 = {coeffs[0]:.3e}; Phi must have mean zero")
    coeffs = coeffs.copy()
    coeffs[0] = 0.0
    fact = np.array([float(math.factorial(k)) for k in range(Q + 1)])
    parseval = float(np.sum(fact * coeffs ** 2))
    exp = HermiteExpansion(coeffs, None, Q, parseval, norm2 - parseval, norm2)
    try:
        rank = hermite_rank(exp, rank_tol)
    except RankUndetected:
        return exp
    return HermiteExpansion(coeffs, rank, Q, parseval, norm2 - parseval, norm2)


def lp_norm(phi: Functional, p: float, quad_order: int = 2 * DEFAULT_Q + 32,
            rel_tol: float = COEFF_TOL) -> float:
    """(E|Phi(N)|^p)^(1/p), confirmed at ``quad_order + 32``."""
    if p < 1:
        raise ValueError("p must be >= 1")

    def moment(order):
        x, w = _gaussian_rule(phi, order)
        return float(np.dot(w, np.abs(phi(x)) ** p))

    a, b = moment(quad_order), moment(quad_order + 32)
    if abs(a - b) > rel_tol * max(abs(a), 1.0):
        raise QuadratureUnstable(f"E|Phi|^p moved from {a!r} to {b!r}")
    return a ** (1.0 / p)


BUILTIN_FUNCTIONALS = {
    "H1": Functional.hermite_single(1),
    "H2": Functional.hermite_single(2),
    "H3": Functional.hermite_single(3),
    "abs_centered": Functional.abs_centered(),
    "sign": Functional.sign(),
}
