"""Flat key-value run configuration.

A config file holds ``key = value`` lines (``#`` or ``;`` comments, no sections)::

    tau.kind = constant
    tau.coeffs = 1
    beta.kind = power_law
    beta.coeffs = 1, 1
    kernel.kind = uniform
    grid.R = 20
    grid.N = 2000

Manifests written by the CLI (JSON with a ``config`` object of the same keys) are
accepted as configs too.  Unknown keys are an error.
"""

from __future__ import annotations

import configparser
import json
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import GrowthFragError, InvalidSpecError
from .problem_model import KernelSpec, ProblemSpec, RateSpec

OUTPUT_ENV = "GROWTHFRAG_OUTPUT_DIR"


class ConfigSyntaxError(GrowthFragError):
    """Malformed config: bad syntax, unknown key or unparsable value."""


def _floats(s: str) -> tuple[float, ...]:
    s = s.strip()
    if not s:
        return ()
    return tuple(float(v) for v in s.replace(";", ",").split(","))


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.split(",") if v.strip())


def _opt_float(s: str):
    return None if s.strip().lower() in ("", "auto", "none") else float(s)


def _opt_int(s: str):
    return None if s.strip().lower() in ("", "auto", "none") else int(s)


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _strs(s: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in s.split(",") if v.strip())


_RATE_KEYS = {"kind": (str, None), "coeffs": (_floats, ""), "b": (float, "0"),
              "alpha0": (float, "0"), "table_x": (_floats, ""), "table_y": (_floats, "")}

# key -> (parser, default string or None when required)
SCHEMA: dict[str, tuple] = {
    **{f"tau.{k}": v for k, v in _RATE_KEYS.items()},
    **{f"beta.{k}": v for k, v in _RATE_KEYS.items()},
    "kernel.kind": (str, None),
    "kernel.r": (float, "0.5"),
    "kernel.alpha": (float, "0"),
    "kernel.rho": (float, "0"),
    "kernel.gamma": (_opt_float, "auto"),
    "kernel.C": (_opt_float, "auto"),
    "kernel.table_z": (_floats, ""),
    "kernel.table_density": (_floats, ""),
    "kernel.symmetric": (_bool, "true"),
    "model.n": (float, "2"),
    "model.mu": (float, "0"),
    "model.xmin": (float, "0"),
    "grid.R": (float, "20"),
    "grid.N": (int, "2000"),
    "grid.kind": (str, "uniform"),
    "grid.ratio": (_opt_float, "auto"),
    "solver.tol": (float, "1e-12"),
    "solver.max_iter": (int, "100000"),
    "solver.shift": (_opt_float, "auto"),
    "solver.seed": (_opt_int, "none"),
    "solver.m_threshold": (float, "1e-8"),
    "solver.strict_audit": (_bool, "false"),
    "schedule.stages": (int, "3"),
    "schedule.R_growth": (float, "2"),
    "schedule.eta_decay": (float, "0.1"),
    "schedule.eta": (float, "1e-2"),
    "schedule.N_growth": (_opt_float, "auto"),
    "schedule.richardson": (_bool, "true"),
    "evolve.T": (float, "40"),
    "evolve.cfl": (float, "0.9"),
    "evolve.scheme": (str, "ssprk3"),
    "evolve.u0": (str, "random"),
    "evolve.u0_center": (float, "2"),
    "evolve.u0_width": (float, "0.5"),
    "evolve.seed": (int, "0"),
    "evolve.threshold": (float, "1e-3"),
    "evolve.solve": (_bool, "true"),
    "study.N_list": (_ints, "500, 1000, 2000"),
    "study.workers": (int, "2"),
    "study.exact_lambda": (_opt_float, "none"),
    "study.sweep_key": (str, ""),
    "study.sweep_values": (_strs, ""),
    "output.dir": (str, "out"),
    "output.stride": (int, "0"),
    "output.formats": (_strs, "csv, json"),
}


@dataclass
class RunConfig:
    raw: dict[str, str]
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def resolved(self) -> dict[str, str]:
        """Every schema key with its effective string value."""
        return {k: self.raw.get(k, SCHEMA[k][1] or "") for k in SCHEMA}

    @property
    def output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_ENV) or self.values["output.dir"])

    def with_overrides(self, **kv) -> "RunConfig":
        raw = dict(self.raw)
        raw.update({k: str(v) for k, v in kv.items()})
        return parse_mapping(raw)


def parse_mapping(raw: dict[str, str]) -> RunConfig:
    unknown = sorted(set(raw) - set(SCHEMA))
    if unknown:
        raise ConfigSyntaxError(f"unknown config keys: {', '.join(unknown)}")
    values = {}
    for key, (parse, default) in SCHEMA.items():
        text = raw.get(key, default)
        if text is None:
            if key in ("tau.kind", "beta.kind", "kernel.kind"):
                values[key] = None
                continue
        try:
            values[key] = parse(text)
        except (TypeError, ValueError) as exc:
            raise ConfigSyntaxError(f"bad value for {key}: {text!r} ({exc})") from None
    return RunConfig(dict(raw), values)


def parse_text(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",), delimiters=("=",),
                                   strict=True)
    cp.optionxform = str  # keep key case
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigSyntaxError(f"malformed config: {exc}") from None
    return parse_mapping(dict(cp["run"]))


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigSyntaxError(f"cannot read config {path}: {exc}") from None
    if path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigSyntaxError(f"malformed JSON config: {exc}") from None
        data = data.get("config", data)
        if not isinstance(data, dict):
            raise ConfigSyntaxError("JSON config must be an object")
        return parse_mapping({str(k): str(v) for k, v in data.items()})
    return parse_text(text)


def _rate(cfg: RunConfig, prefix: str) -> RateSpec:
    kind = cfg[f"{prefix}.kind"]
    if kind is None:
        raise ConfigSyntaxError(f"missing {prefix}.kind")
    return RateSpec(kind, cfg[f"{prefix}.coeffs"], support_infimum_b=cfg[f"{prefix}.b"],
                    alpha0=cfg[f"{prefix}.alpha0"], table_x=cfg[f"{prefix}.table_x"],
                    table_y=cfg[f"{prefix}.table_y"])


def _kernel(cfg: RunConfig) -> KernelSpec:
    kind = cfg["kernel.kind"]
    g, C = cfg["kernel.gamma"], cfg["kernel.C"]
    if kind is None:
        raise ConfigSyntaxError("missing kernel.kind")
    if kind == "uniform":
        return KernelSpec("uniform", gamma=g, shattering_constant_C=C)
    if kind in ("mitosis_r", "mitosis"):
        return KernelSpec("mitosis_r", cfg["kernel.r"], gamma=g, shattering_constant_C=C)
    if kind == "renewal":
        return KernelSpec("mitosis_r", 0.0, gamma=g, shattering_constant_C=C)
    if kind == "homogeneous_alpha":
        return KernelSpec("homogeneous_alpha", cfg["kernel.alpha"], gamma=g, shattering_constant_C=C)
    if kind == "tabulated_density":
        return KernelSpec("tabulated_density", gamma=g, shattering_constant_C=C,
                          table_z=cfg["kernel.table_z"], table_density=cfg["kernel.table_density"],
                          symmetric=cfg["kernel.symmetric"])
    if kind == "mixture":
        return KernelSpec.renewal_mixture(cfg["kernel.rho"], cfg["kernel.r"])
    raise InvalidSpecError(f"unknown kernel kind {kind!r}")


def build_problem(cfg: RunConfig) -> ProblemSpec:
    mu = cfg["model.mu"]
    return ProblemSpec(_rate(cfg, "tau"), _rate(cfg, "beta"), _kernel(cfg),
                       n_fragments=cfg["model.n"], death_mu=RateSpec.constant(mu),
                       x_min=cfg["model.xmin"])
