"""Experiment configs: YAML trees with fixed field names, validated up front.

Every object an experiment needs (model, functional, weight, sets, sources)
is built during validation so a bad config fails before any sampling.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .breuer_major import Ball, Weight
from .corrector import Source
from .covariance import CovarianceModel
from .errors import ConfigInvalid, OscBMError
from .hermite import BUILTIN_FUNCTIONALS, Functional

EXPERIMENT_KINDS = ("sigma2", "verify-bm", "verify-bm-fdd", "verify-corrector",
                    "verify-homogeneous", "sample-field")

DEFAULTS = {
    "mc": {"batch": 256, "max_reject_rate": 0.01},
    "tol": {"quad": 1e-10, "sigma2": 1e-8, "k_var": 3.0, "k_cov": 4.0,
            "ks_alpha": 0.01, "identity": 1e-9, "mass": 1e-12},
    "hermite": {"Q": 24},
    "grid": {"points_per_unit": 8, "min_cells": 1024, "cells": 2048},
    "out": {"dir": "out", "samples": False},
}


def _line_map(node, prefix="", out=None) -> dict:
    """Dotted key path -> 1-based source line, from a composed YAML node."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[path] = k.start_mark.line + 1
            _line_map(v, path, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            path = f"{prefix}[{i}]"
            out[path] = v.start_mark.line + 1
            _line_map(v, path, out)
    return out


def load_config(path) -> "ExperimentConfig":
    """Parse and validate the YAML config at ``path``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config: {exc}") from exc
    return parse_config(text, base_dir=path.parent)


def parse_config(text: str, base_dir=".", seed_override=None, env_seed=None) -> "ExperimentConfig":
    try:
        raw = yaml.safe_load(text)
        lines = _line_map(yaml.compose(text)) if raw is not None else {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigInvalid(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                            line=None if mark is None else mark.line + 1) from exc
    if not isinstance(raw, dict):
        raise ConfigInvalid("config must be a mapping at top level")
    return validate(raw, lines, Path(base_dir), seed_override, env_seed)


class _Fields:
    """Typed accessors over the raw tree that raise ConfigInvalid with location."""

    def __init__(self, raw: dict, lines: dict):
        self.raw = raw
        self.lines = lines

    def fail(self, path, message):
        # report the nearest ancestor that has a line
        p = path
        while p and p not in self.lines:
            p = p.rpartition(".")[0]
        raise ConfigInvalid(message, field=path, line=self.lines.get(p))

    def get(self, path, default=KeyError):
        node = self.raw
        for part in path.split("."):
            if not isinstance(node, dict) or part not in node:
                if default is KeyError:
                    self.fail(path, "missing required field")
                return default
            node = node[part]
        return node

    def number(self, path, default=KeyError, lo=None, hi=None, lo_open=False, integer=False):
        v = self.get(path, default)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(path, f"expected a number, got {v!r}")
        if integer and (not float(v).is_integer()):
            self.fail(path, f"expected an integer, got {v!r}")
        v = int(v) if integer else float(v)
        if not math.isfinite(v):
            self.fail(path, "must be finite")
        if lo is not None and (v < lo or (lo_open and v == lo)):
            self.fail(path, f"must be {'>' if lo_open else '>='} {lo}, got {v}")
        if hi is not None and v > hi:
            self.fail(path, f"must be <= {hi}, got {v}")
        return v

    def numbers(self, path, default=KeyError, allow_empty=False, **kw):
        v = self.get(path, default)
        if v is None:
            return None
        if not isinstance(v, list) or not (v or allow_empty):
            self.fail(path, "expected a non-empty list of numbers")
        return [self.number_at(f"{path}[{i}]", x, **kw) for i, x in enumerate(v)]

    def number_at(self, path, v, lo=None, lo_open=False, hi=None):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            self.fail(path, f"expected a finite number, got {v!r}")
        v = float(v)
        if lo is not None and (v < lo or (lo_open and v == lo)):
            self.fail(path, f"must be {'>' if lo_open else '>='} {lo}, got {v}")
        if hi is not None and v > hi:
            self.fail(path, f"must be <= {hi}, got {v}")
        return v

    def choice(self, path, options, default=KeyError):
        v = self.get(path, default)
        if v not in options:
            self.fail(path, f"must be one of {', '.join(map(str, options))}; got {v!r}")
        return v


def _model(f: _Fields, base_dir: Path) -> tuple[CovarianceModel, dict]:
    kind = f.choice("model.kind", ("exponential", "gaussian", "table"))
    dim = f.number("model.dim", 1, integer=True, lo=1, hi=2)
    try:
        if kind == "exponential":
            rate = f.number("model.rate", 1.0, lo=0.0, lo_open=True)
            return CovarianceModel.exponential(rate, dim), {"kind": kind, "rate": rate, "dim": dim}
        if kind == "gaussian":
            scale = f.number("model.scale", 1.0, lo=0.0, lo_open=True)
            return CovarianceModel.gaussian(scale, dim), {"kind": kind, "scale": scale, "dim": dim}
        if dim != 1:
            f.fail("model.dim", "table models are 1-d")
        decay = f.number("model.decay_m", None, integer=True, lo=1)
        path = f.get("model.path")
        if not isinstance(path, str):
            f.fail("model.path", "expected a file path")
        model = CovarianceModel.from_csv(base_dir / path, decay_m=decay)
        return model, {"kind": kind, "path": path, "decay_m": decay, "dim": 1}
    except (ValueError, OSError) as exc:
        if isinstance(exc, ConfigInvalid):
            raise
        f.fail("model", str(exc))


def _phi(f: _Fields) -> tuple[Functional, dict]:
    kinds = tuple(BUILTIN_FUNCTIONALS) + ("hermite_single", "polynomial", "abs_centered", "sign")
    kind = f.choice("phi.kind", kinds)
    if kind == "hermite_single":
        q = f.number("phi.q", integer=True, lo=1)
        return Functional.hermite_single(q), {"kind": kind, "q": q}
    if kind == "polynomial":
        coeffs = f.numbers("phi.coeffs")
        return Functional.polynomial(coeffs), {"kind": kind, "coeffs": coeffs}
    return BUILTIN_FUNCTIONALS[kind], {"kind": kind}


def _weight(f: _Fields, path: str) -> tuple[Weight, dict]:
    if f.get(path, None) is None:
        return Weight.constant(1.0), {"kind": "constant", "value": 1.0}
    kind = f.choice(f"{path}.kind", ("constant", "polynomial", "table"))
    if kind == "constant":
        v = f.number(f"{path}.value", 1.0)
        return Weight.constant(v), {"kind": kind, "value": v}
    if kind == "polynomial":
        c = f.numbers(f"{path}.coeffs")
        return Weight.polynomial(c), {"kind": kind, "coeffs": c}
    xs, ys = f.numbers(f"{path}.x"), f.numbers(f"{path}.y")
    interp = f.choice(f"{path}.interp", ("linear", "step"), "linear")
    if len(xs) != len(ys) or any(b <= a for a, b in zip(xs, xs[1:])):
        f.fail(path, "table needs equal-length x, y with strictly increasing x")
    return Weight.table(xs, ys, interp), {"kind": kind, "x": xs, "y": ys, "interp": interp}


def _sets(f: _Fields, dim: int):
    raw = f.get("sets")
    if not isinstance(raw, list) or not raw:
        f.fail("sets", "expected a non-empty list of sets")
    sets, echo = [], []
    for i, s in enumerate(raw):
        p = f"sets[{i}]"
        if isinstance(s, dict) and "ball" in s:
            r = f.number_at(p, s["ball"], lo=0.0, lo_open=True)
            sets.append(Ball(r, dim))
            echo.append({"ball": r})
            continue
        if not (isinstance(s, list) and len(s) == 2):
            f.fail(p, "expected [lo, hi] or {ball: radius}")
        if dim == 1:
            lo, hi = (f.number_at(p, v) for v in s)
            if not hi > lo:
                f.fail(p, "needs lo < hi")
            sets.append((lo, hi))
            echo.append([lo, hi])
        else:
            if not all(isinstance(c, list) and len(c) == 2 for c in s):
                f.fail(p, "2-d boxes are [[lo0, lo1], [hi0, hi1]]")
            lo = tuple(f.number_at(p, v) for v in s[0])
            hi = tuple(f.number_at(p, v) for v in s[1])
            if not all(b > a for a, b in zip(lo, hi)):
                f.fail(p, "needs lo < hi on both axes")
            sets.append((lo, hi))
            echo.append([list(lo), list(hi)])
    return sets, echo


def _source(f: _Fields, path: str) -> tuple[Source, dict]:
    kind = f.choice(f"{path}.kind", ("constant", "polynomial", "table"), "polynomial")
    if kind == "constant":
        v = f.number(f"{path}.value")
        return Source.constant(v), {"kind": kind, "value": v}
    if kind == "polynomial":
        c = f.numbers(f"{path}.coeffs", [0.0])
        return Source.polynomial(c), {"kind": kind, "coeffs": c}
    xs, ys = f.numbers(f"{path}.x"), f.numbers(f"{path}.y")
    if len(xs) != len(ys) or any(b <= a for a, b in zip(xs, xs[1:])):
        f.fail(path, "table needs equal-length x, y with strictly increasing x")
    return Source.table(xs, ys), {"kind": kind, "x": xs, "y": ys}


@dataclass
class ExperimentConfig:
    """A validated experiment.  ``data`` is the canonical tree echoed into reports."""

    kind: str
    data: dict
    objects: dict = field(default_factory=dict, repr=False)

    @property
    def experiment_id(self) -> str:
        return self.data["experiment"]["id"]

    @property
    def seed(self) -> int:
        return self.data["mc"]["seed"]

    @property
    def n(self) -> int:
        return self.data["mc"].get("n", 0)

    @property
    def out_dir(self) -> str:
        return self.data["out"]["dir"]

    def section(self, name: str) -> dict:
        return self.data.get(name, {})


def _resolve_seed(f: _Fields, seed_override, env_seed) -> int:
    if seed_override is not None:
        return int(seed_override)
    cfg = f.number("mc.seed", None, integer=True, lo=0)
    if cfg is not None:
        return cfg
    if env_seed not in (None, ""):
        try:
            return int(env_seed)
        except ValueError:
            raise ConfigInvalid(f"BM_SEED is not an integer: {env_seed!r}", field="BM_SEED")
    return 0


def validate(raw: dict, lines: dict | None = None, base_dir: Path = Path("."),
             seed_override=None, env_seed=None) -> ExperimentConfig:
    """Check ``raw`` and build every object the experiment needs."""
    f = _Fields(copy.deepcopy(raw), lines or {})
    kind = f.choice("experiment.kind", EXPERIMENT_KINDS)
    data = {"experiment": {"kind": kind, "id": str(f.get("experiment.id", kind))}}
    objects = {}

    data["mc"] = {
        "seed": _resolve_seed(f, seed_override, env_seed),
        "batch": f.number("mc.batch", DEFAULTS["mc"]["batch"], integer=True, lo=1),
        "max_reject_rate": f.number("mc.max_reject_rate", DEFAULTS["mc"]["max_reject_rate"],
                                    lo=0.0, hi=1.0),
    }
    if kind != "sigma2":
        data["mc"]["n"] = f.number("mc.n", integer=True, lo=0)
    data["tol"] = {k: f.number(f"tol.{k}", v, lo=0.0) for k, v in DEFAULTS["tol"].items()}
    data["hermite"] = {"Q": f.number("hermite.Q", DEFAULTS["hermite"]["Q"], integer=True, lo=1)}
    data["out"] = {"dir": str(f.get("out.dir", DEFAULTS["out"]["dir"])),
                   "samples": bool(f.get("out.samples", DEFAULTS["out"]["samples"]))}

    objects["model"], data["model"] = _model(f, base_dir)
    dim = objects["model"].dim
    if kind != "sample-field":
        objects["phi"], data["phi"] = _phi(f)

    if kind == "sigma2":
        beta = f.number("beta", None, lo=0.0, lo_open=True, hi=1.0)
        if beta is not None and beta >= 1.0:
            f.fail("beta", "must lie in (0, 1)")
        data["beta"] = beta
        data["target"] = {"sigma2": f.number("target.sigma2", None),
                          "sigma_nu2": f.number("target.sigma_nu2", None)}
    elif kind in ("verify-bm", "verify-bm-fdd"):
        objects["sets"], data["sets"] = _sets(f, dim)
        if kind == "verify-bm-fdd" and len(objects["sets"]) < 2:
            f.fail("sets", "verify-bm-fdd needs at least two sets")
        objects["weight"], data["weight"] = _weight(f, "weight")
        data["R"] = f.number("R", lo=0.0, lo_open=True)
        data["target"] = f.choice("target", ("limit", "finite"), "limit")
        if data["target"] == "finite" and dim != 1:
            f.fail("target", "finite-R targets are 1-d only")
        data["grid"] = {k: f.number(f"grid.{k}", DEFAULTS["grid"][k], integer=True, lo=1)
                        for k in ("points_per_unit", "min_cells")}
    elif kind == "verify-homogeneous":
        if dim != 1:
            f.fail("model.dim", "the homogeneous variant is 1-d")
        beta = f.number("beta", lo=0.0, lo_open=True)
        if beta >= 1.0:
            f.fail("beta", "must lie in (0, 1)")
        data["beta"] = beta
        data["radii"] = f.numbers("radii", [1.0], lo=0.0, lo_open=True)
        data["R"] = f.number("R", lo=0.0, lo_open=True)
        data["grid"] = {k: f.number(f"grid.{k}", DEFAULTS["grid"][k], integer=True, lo=1)
                        for k in ("points_per_unit", "min_cells")}
    elif kind == "verify-corrector":
        if dim != 1:
            f.fail("model.dim", "the corrector problem is 1-d")
        objects["f"], fe = _source(f, "corrector.f")
        c = {"f": fe,
             "b": f.number("corrector.b", 0.0),
             "a_star": f.number("corrector.a_star")}
        if c["a_star"] == 0:
            f.fail("corrector.a_star", "must be nonzero")
        c["epsilon"] = f.numbers("corrector.epsilon", lo=0.0, lo_open=True, hi=1.0)
        c["x_obs"] = f.numbers("corrector.x_obs", [0.25, 0.5, 0.75], lo=0.0, hi=1.0)
        c["fluctuation_eps"] = f.numbers("corrector.fluctuation_eps", [min(c["epsilon"])],
                                         allow_empty=True, lo=0.0, lo_open=True, hi=1.0)
        for i, e in enumerate(c["fluctuation_eps"]):
            if e not in c["epsilon"]:
                f.fail(f"corrector.fluctuation_eps[{i}]", "must be one of corrector.epsilon")
        c["convergence_x"] = f.number("corrector.convergence_x", 0.5, lo=0.0, hi=1.0)
        if f.get("corrector.bound", None) is not None:
            objects["bound_h"], he = _weight(f, "corrector.bound.h")
            c["bound"] = {"v": f.numbers("corrector.bound.v", lo=0.0, lo_open=True, hi=1.0),
                          "h": he}
        data["corrector"] = c
        data["grid"] = {"cells": f.number("grid.cells", DEFAULTS["grid"]["cells"], integer=True, lo=2),
                        "points_per_unit": f.number("grid.points_per_unit",
                                                    DEFAULTS["grid"]["points_per_unit"],
                                                    integer=True, lo=1)}
    elif kind == "sample-field":
        points = f.number("grid.points", integer=True, lo=2)
        spacing = f.number("grid.spacing", objects["model"].correlation_length / 8,
                           lo=0.0, lo_open=True)
        lags = [int(v) for v in f.numbers("lags", [1, 8, 16], lo=1)]
        for i, lag in enumerate(lags):
            if lag >= points:
                f.fail(f"lags[{i}]", f"lag {lag} exceeds grid.points - 1")
        data["grid"] = {"points": points, "spacing": spacing}
        data["lags"] = lags
        data["out"]["field_dump"] = bool(f.get("out.field_dump", False))

    known = {"experiment", "mc", "tol", "hermite", "out", "model", "phi", "sets", "weight",
             "R", "target", "beta", "radii", "corrector", "grid", "lags"}
    for key in raw:
        if key not in known:
            f.fail(str(key), "unknown field")
    try:
        if "phi" in objects and kind != "sample-field":
            # catches non-centred or unstable functionals before any compute
            from .hermite import expand
            objects["expansion"] = expand(objects["phi"], data["hermite"]["Q"])
    except OscBMError as exc:
        f.fail("phi", str(exc))
    return ExperimentConfig(kind, data, objects)
