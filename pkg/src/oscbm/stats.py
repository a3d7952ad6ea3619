"""Monte Carlo statistics and auditable verdicts."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.special import ndtr

from .errors import DegenerateSigma, ShapeMismatch, TooFewSamples

K_VARIANCE = 3.0
K_COVARIANCE = 4.0
KS_ALPHA = 0.01


@dataclass(frozen=True)
class SampleSet:
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError(f"sample set {self.label!r} holds non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class Moments:
    mean: float
    variance: float
    se_mean: float
    se_variance: float
    n: int


def _values(s) -> np.ndarray:
    return s.values if isinstance(s, SampleSet) else np.asarray(s, dtype=float)


def empirical_moments(s) -> Moments:
    """Mean and unbiased variance with Gaussian-model standard errors."""
    v = _values(s)
    n = v.shape[0]
    if n < 2:
        raise TooFewSamples(f"need at least 2 samples, got {n}")
    var = float(np.var(v, ddof=1))
    return Moments(float(np.mean(v)), var, math.sqrt(var / n),
                   var * math.sqrt(2.0 / (n - 1)), n)


def kolmogorov_sf(lam: float, max_terms: int = 100, term_tol: float = 1e-12) -> float:
    """P(K > lam) for the Kolmogorov distribution K."""
    if lam <= 0.0:
        return 1.0
    if lam < 1.0:
        # theta-function form converges fast for small lam
        s = 0.0
        c = math.pi ** 2 / (8.0 * lam * lam)
        for k in range(1, max_terms + 1):
            t = math.exp(-((2 * k - 1) ** 2) * c)
            s += t
            if t < term_tol * max(s, 1e-300):
                break
        return min(1.0, max(0.0, 1.0 - math.sqrt(2.0 * math.pi) / lam * s))
    s = 0.0
    for k in range(1, max_terms + 1):
        t = math.exp(-2.0 * k * k * lam * lam)
        s += t if k % 2 else -t
        if t < term_tol:
            break
    return min(1.0, max(0.0, 2.0 * s))


@dataclass(frozen=True)
class KSResult:
    statistic: float
    p_value: float
    n: int


def ks_normality(s, mu: float = 0.0, sigma: float = 1.0) -> KSResult:
    """One-sample KS test against N(mu, sigma^2) with the asymptotic p-value."""
    if not sigma > 0:
        raise DegenerateSigma(f"sigma must be > 0, got {sigma}")
    v = np.sort(_values(s))
    n = v.size
    if n < 20:
        raise TooFewSamples(f"KS test needs n >= 20, got {n}")
    cdf = ndtr((v - mu) / sigma)
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))
    return KSResult(d, kolmogorov_sf(math.sqrt(n) * d), n)


def covariance_se(cov: np.ndarray, n: int) -> np.ndarray:
    """Gaussian-model SE of sample covariances: sqrt((S_ii S_jj + S_ij^2)/(n-1))."""
    cov = np.atleast_2d(cov)
    d = np.diag(cov)
    return np.sqrt((np.outer(d, d) + cov ** 2) / (n - 1))


@dataclass(frozen=True)
class CovarianceComparison:
    passed: np.ndarray
    z: np.ndarray
    se: np.ndarray

    @property
    def all_pass(self) -> bool:
        return bool(np.all(self.passed))


def compare_covariance(empirical, theoretical, k: float = K_COVARIANCE,
                       n: Optional[int] = None, se=None) -> CovarianceComparison:
    """Entrywise pass iff |emp - theo| <= k * SE.

    SEs default to the Gaussian fourth-moment formula on the empirical
    matrix, which needs ``n``.
    """
    emp = np.atleast_2d(np.asarray(empirical, dtype=float))
    theo = np.atleast_2d(np.asarray(theoretical, dtype=float))
    if emp.shape != theo.shape:
        raise ShapeMismatch(f"{emp.shape} vs {theo.shape}")
    if se is None:
        if n is None:
            raise ValueError("either n or se is required")
        se = covariance_se(emp, n)
    se = np.atleast_2d(np.asarray(se, dtype=float))
    if se.shape != emp.shape:
        raise ShapeMismatch(f"se shape {se.shape} vs {emp.shape}")
    diff = np.abs(emp - theo)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / se, np.where(diff > 0, np.inf, 0.0))
    return CovarianceComparison(diff <= k * se, z, se)


# -- reports ------------------------------------------------------------------------

OPS = ("abs_diff_le", "le", "lt", "ge", "strictly_decreasing", "true")


def check(name: str, op: str, value, target=None, threshold=None) -> dict:
    """A verdict record that can be re-evaluated from its stored numbers."""
    if op not in OPS:
        raise ValueError(f"unknown op {op!r}")
    rec = {"name": name, "op": op, "value": value, "target": target, "threshold": threshold}
    rec["pass"] = evaluate_check(rec)
    return rec


def evaluate_check(rec: dict) -> bool:
    op, v, t, th = rec["op"], rec["value"], rec["target"], rec["threshold"]
    if op == "abs_diff_le":
        return bool(abs(v - t) <= th)
    if op == "le":
        return bool(v <= th)
    if op == "lt":
        return bool(v < th)
    if op == "ge":
        return bool(v >= th)
    if op == "strictly_decreasing":
        return bool(all(a > b for a, b in zip(v[:-1], v[1:])))
    return bool(v)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


@dataclass
class MonteCarloReport:
    """Experiment outcome.  ``verdict`` maps each criterion to its audit record."""

    experiment_id: str
    n_replications: int
    n_rejected: int = 0
    empirical: dict = field(default_factory=dict)
    theoretical: dict = field(default_factory=dict)
    tests: dict = field(default_factory=dict)
    verdict: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    config_echo: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(rec["pass"] for rec in self.verdict.values())

    def add(self, name, op, value, target=None, threshold=None) -> dict:
        if name in self.verdict:
            raise ValueError(f"duplicate criterion {name!r}")
        rec = check(name, op, _clean(value), _clean(target), _clean(threshold))
        self.verdict[name] = rec
        return rec

    def to_dict(self) -> dict:
        return _clean(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def audit(report: dict) -> bool:
    """True iff every stored verdict is reproduced from its stored numbers."""
    return all(evaluate_check(rec) == rec["pass"] for rec in report["verdict"].values())


def report_passed(report: dict) -> bool:
    return all(rec["pass"] for rec in report["verdict"].values())


def run_monte_carlo(config) -> MonteCarloReport:
    """Run the experiment for a validated config or a raw config mapping."""
    from .config import ExperimentConfig, validate
    from .experiments import run_experiment

    if not isinstance(config, ExperimentConfig):
        config = validate(config)
    return run_experiment(config)
