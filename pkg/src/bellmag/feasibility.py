"""From laboratory numbers to the dimensionless protocol parameters, with approximation checks.

All rates are angular (rad/s) internally.  Config files quote rates as
strings with a unit suffix (``"20 MHz"``); the per-file ``angular`` flag says
whether those numbers already are angular rates (``true``) or ordinary
frequencies to be multiplied by 2 pi (``false``, the default).
"""

from __future__ import annotations

import json
from importlib import resources
import math
import re
from dataclasses import asdict, dataclass, field

from scipy import constants

from . import core_model as cm

__all__ = [
    "ConfigError",
    "ExperimentParams",
    "FeasibilityReport",
    "analyze",
    "effective_couplings",
    "load_config",
    "params_from_config",
    "pump_amplitude",
    "thermal_occupation",
    "preset_path",
]

WEAK_COUPLING_MAX = 0.1
DECOHERENCE_MAX = 0.1
OVERCOUPLING_MAX = 0.1
OPTIMAL_G1TAU = 0.25

_RATE_UNITS = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9, "thz": 1e12}
_TEMP_UNITS = {"k": 1.0, "mk": 1e-3, "uk": 1e-6}
_QUANTITY = re.compile(r"^\s*([-+0-9.eE]+)\s*([A-Za-z]*)\s*$")



class ConfigError(ValueError):
    def __init__(self, message, keys=()):
        super().__init__(message)
        self.keys = list(keys)


def pump_amplitude(eps: float, kappa_ex: float, delta: float = 0.0) -> complex:
    """Steady intracavity amplitude ``eps / (i kappa_ex/2 - delta)`` of a driven mode."""
    if kappa_ex < 0:
        raise ValueError("kappa_ex must be >= 0")
    denom = 0.5j * kappa_ex - delta
    if denom == 0:
        raise ZeroDivisionError("kappa_ex = 0 at zero detuning: amplitude diverges")
    return eps / denom


def thermal_occupation(omega: float, temperature: float, angular: bool = True) -> float:
    """Bose-Einstein occupation ``1/(exp(hbar w / k_B T) - 1)``.

    With ``angular=False`` the input is an ordinary frequency in Hz.
    """
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    if omega <= 0:
        raise ValueError("omega must be > 0")
    if temperature == 0:
        return 0.0
    w = omega if angular else 2.0 * math.pi * omega
    x = constants.hbar * w / (constants.k * temperature)
    if x > 700:
        return 0.0
    return 1.0 / math.expm1(x)


@dataclass
class ExperimentParams:
    """Physical inputs, rates in rad/s, durations in s, temperature in K.

    ``G1``/``G2`` may be given directly; otherwise they follow from ``g`` and
    the drive amplitudes ``eps2`` (first pulse) and ``eps1`` (second pulse).
    ``quoted_angular`` records how the source numbers were read, so the
    report can show the other 2 pi convention next to the chosen one.
    """

    kappa1: float
    kappa2: float
    tau1: float
    tau2: float
    gamma: float = 0.0
    g: float | None = None
    eps1: float | None = None
    eps2: float | None = None
    kappa_ex1: float | None = None
    kappa_ex2: float | None = None
    kappa_i1: float = 0.0
    kappa_i2: float = 0.0
    delta1: float = 0.0
    delta2: float = 0.0
    omega_m: float | None = None
    temperature: float | None = None
    n_th: float | None = None
    G1: float | None = None
    G2: float | None = None
    protocol: bool = True
    quoted_angular: bool = True

    def __post_init__(self):
        # over-coupled default: all of the linewidth is external
        if self.kappa_ex1 is None:
            self.kappa_ex1 = self.kappa1 - self.kappa_i1
        if self.kappa_ex2 is None:
            self.kappa_ex2 = self.kappa2 - self.kappa_i2
        for name in ("kappa1", "kappa2", "tau1", "tau2", "gamma", "kappa_ex1", "kappa_ex2", "kappa_i1", "kappa_i2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for i in (1, 2):
            total = getattr(self, f"kappa{i}")
            parts = getattr(self, f"kappa_ex{i}") + getattr(self, f"kappa_i{i}")
            if not math.isclose(total, parts, rel_tol=1e-9, abs_tol=1e-12):
                raise ValueError(f"kappa{i} must equal kappa_ex{i} + kappa_i{i}")
        if self.protocol and (self.delta1 != 0 or self.delta2 != 0):
            raise ValueError("the protocol drives both pulses on resonance (delta1 = delta2 = 0)")
        if self.G1 is None or self.G2 is None:
            missing = [k for k in ("g", "eps1", "eps2") if getattr(self, k) is None]
            if missing:
                raise ValueError(f"need G1/G2 or {', '.join(missing)}")

    def scaled(self, s: float) -> "ExperimentParams":
        """Rates times ``s``, durations divided by ``s``."""
        d = asdict(self)
        for k in ("kappa1", "kappa2", "gamma", "g", "eps1", "eps2", "kappa_ex1", "kappa_ex2", "kappa_i1", "kappa_i2", "delta1", "delta2", "omega_m", "G1", "G2"):
            if d[k] is not None:
                d[k] = d[k] * s
        d["tau1"] /= s
        d["tau2"] /= s
        return ExperimentParams(**d)


def effective_couplings(params: ExperimentParams) -> tuple[float, float]:
    """``(G1, G2) = (g |alpha2|, g |alpha1|)``: each pulse's coupling comes from the other mode's drive."""
    G1, G2 = params.G1, params.G2
    if G1 is None:
        G1 = params.g * abs(pump_amplitude(params.eps2, params.kappa_ex2, params.delta2))
    if G2 is None:
        G2 = params.g * abs(pump_amplitude(params.eps1, params.kappa_ex1, params.delta1))
    return G1, G2


@dataclass
class FeasibilityReport:
    alpha1: float | None
    alpha2: float | None
    G1: float
    G2: float
    G1_eff: float
    G2_eff: float
    g1tau: float
    g2tau: float
    p: float
    T: float
    weak_coupling1: float
    weak_coupling2: float
    n_th: float | None
    decoherence_margin: float | None
    overcoupling1: float
    overcoupling2: float
    n_th_bose: float | None = None
    n_th_bose_other_convention: float | None = None
    flags: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    optimal_S: float | None = None

    @property
    def ok(self) -> bool:
        return all(self.flags.values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ok"] = self.ok
        return d

    def format_text(self) -> str:
        lines = [
            "feasibility report",
            f"  G1 = {self.G1:.6g} rad/s   G2 = {self.G2:.6g} rad/s",
            f"  G1~ = {self.G1_eff:.6g} rad/s   G2~ = {self.G2_eff:.6g} rad/s",
            f"  G1~ tau1 = {self.g1tau:.6g}   p = {self.p:.6g}",
            f"  G2~ tau2 = {self.g2tau:.6g}   T = {self.T:.6g}",
            f"  G1/kappa1 = {self.weak_coupling1:.4g}   G2/kappa2 = {self.weak_coupling2:.4g}",
        ]
        if self.alpha1 is not None:
            lines.append(f"  |alpha1| = {self.alpha1:.6g}   |alpha2| = {self.alpha2:.6g}")
        if self.decoherence_margin is not None:
            lines.append(f"  (tau1+tau2) gamma n_th = {self.decoherence_margin:.4g}")
        lines.append(f"  kappa_i/kappa_ex = {self.overcoupling1:.4g}, {self.overcoupling2:.4g}")
        if self.n_th_bose is not None:
            lines.append(f"  Bose-Einstein n_th: {self.n_th_bose:.4g} (other 2 pi convention: {self.n_th_bose_other_convention:.4g})")
        if self.optimal_S is not None:
            lines.append(f"  optimal S = {self.optimal_S:.6f}")
        for name, passed in self.flags.items():
            lines.append(f"  [{'PASS' if passed else 'FAIL'}] {name}")
        for w in self.warnings:
            lines.append(f"  warning: {w}")
        return "\n".join(lines)


def _ratio(num, den):
    if den == 0:
        return math.inf if num else 0.0
    return num / den


def analyze(
    params: ExperimentParams,
    weak_max: float = WEAK_COUPLING_MAX,
    decoherence_max: float = DECOHERENCE_MAX,
    overcoupling_max: float = OVERCOUPLING_MAX,
    optimize: bool = False,
) -> FeasibilityReport:
    """Derive ``p``, ``T`` and the approximation margins; failures become flags, not exceptions."""
    G1, G2 = effective_couplings(params)
    a1 = a2 = None
    if params.G1 is None and params.G2 is None:
        a1 = abs(pump_amplitude(params.eps1, params.kappa_ex1, params.delta1))
        a2 = abs(pump_amplitude(params.eps2, params.kappa_ex2, params.delta2))
    G1e = 2.0 * G1**2 / params.kappa1
    G2e = 2.0 * G2**2 / params.kappa2
    g1tau = G1e * params.tau1
    g2tau = G2e * params.tau2
    n_th = params.n_th
    bose_a = bose_o = None
    warnings = []
    if params.omega_m is not None and params.temperature is not None:
        bose_a = thermal_occupation(params.omega_m, params.temperature)
        other = params.omega_m * 2.0 * math.pi if params.quoted_angular else params.omega_m / (2.0 * math.pi)
        bose_o = thermal_occupation(other, params.temperature)
        if n_th is None:
            n_th = bose_a
        elif not (math.isclose(n_th, bose_a, rel_tol=0.05) or math.isclose(n_th, bose_o, rel_tol=0.05)):
            warnings.append(
                f"given n_th = {n_th:g} does not follow from Bose-Einstein at T = {params.temperature:g} K "
                f"({bose_a:.3g}, or {bose_o:.3g} under the other 2 pi convention)"
            )
    margin = None if n_th is None else (params.tau1 + params.tau2) * params.gamma * n_th

    wc1, wc2 = _ratio(G1, params.kappa1), _ratio(G2, params.kappa2)
    oc1, oc2 = _ratio(params.kappa_i1, params.kappa_ex1), _ratio(params.kappa_i2, params.kappa_ex2)
    flags = {
        f"weak coupling G/kappa <= {weak_max:g}": max(wc1, wc2) <= weak_max,
        f"over-coupled cavity kappa_i/kappa_ex <= {overcoupling_max:g}": max(oc1, oc2) <= overcoupling_max,
    }
    if margin is not None:
        flags[f"decoherence (tau1+tau2) gamma n_th <= {decoherence_max:g}"] = margin <= decoherence_max
    if abs(g1tau - OPTIMAL_G1TAU) > 0.2 * OPTIMAL_G1TAU:
        warnings.append(f"G1~ tau1 = {g1tau:.4g} is far from the CHSH-optimal value {OPTIMAL_G1TAU}")

    p = cm.p_from_g1tau(g1tau)
    T = cm.T_from_g2tau(g2tau)
    report = FeasibilityReport(
        alpha1=a1,
        alpha2=a2,
        G1=G1,
        G2=G2,
        G1_eff=G1e,
        G2_eff=G2e,
        g1tau=g1tau,
        g2tau=g2tau,
        p=p,
        T=T,
        weak_coupling1=wc1,
        weak_coupling2=wc2,
        n_th=n_th,
        decoherence_margin=margin,
        overcoupling1=oc1,
        overcoupling2=oc2,
        n_th_bose=bose_a,
        n_th_bose_other_convention=bose_o,
        flags=flags,
        warnings=warnings,
    )
    if optimize:
        from .optimizer import ChshObjective, optimize_settings

        report.optimal_S = optimize_settings(ChshObjective.chsh(p, T)).best_S
    return report


# ---------------------------------------------------------------- config files

_RATE_KEYS = {"kappa1", "kappa2", "kappa_ex1", "kappa_ex2", "kappa_i1", "kappa_i2", "gamma", "g", "eps1", "eps2", "delta1", "delta2", "omega_m", "G1", "G2"}
_OTHER_KEYS = {"angular", "temperature", "n_th", "tau1_ns", "tau2_ns", "protocol"}
_REQUIRED = {"kappa1", "kappa2", "tau1_ns", "tau2_ns"}


def _parse_quantity(key, value, units):
    if isinstance(value, bool):
        raise ConfigError(f"{key}: expected a number or quantity string", [key])
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{key}: expected a number or quantity string", [key])
    m = _QUANTITY.match(value)
    if not m:
        raise ConfigError(f"{key}: cannot parse {value!r}", [key])
    number, unit = m.groups()
    unit = unit.lower() or next(iter(units))
    if unit not in units:
        raise ConfigError(f"{key}: unknown unit {m.group(2)!r} (use {', '.join(units)})", [key])
    try:
        return float(number) * units[unit]
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r}", [key]) from None


def params_from_config(cfg: dict) -> ExperimentParams:
    """Validate a config mapping and convert it to :class:`ExperimentParams`."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(cfg) - _RATE_KEYS - _OTHER_KEYS)
    missing = sorted(_REQUIRED - set(cfg))
    if not {"G1", "G2"} <= set(cfg):
        missing += sorted({"g", "eps1", "eps2"} - set(cfg))
    if unknown or missing:
        parts = []
        if unknown:
            parts.append(f"unknown keys: {', '.join(unknown)}")
        if missing:
            parts.append(f"missing keys: {', '.join(missing)}")
        raise ConfigError("; ".join(parts), unknown + missing)
    angular = cfg.get("angular", False)
    if not isinstance(angular, bool):
        raise ConfigError("angular must be true or false", ["angular"])
    scale = 1.0 if angular else 2.0 * math.pi
    kw = {}
    for key in _RATE_KEYS & set(cfg):
        kw[key] = _parse_quantity(key, cfg[key], _RATE_UNITS) * scale
    for key in ("tau1_ns", "tau2_ns"):
        v = cfg[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0:
            raise ConfigError(f"{key} must be a non-negative number of nanoseconds", [key])
        kw[key[:-3]] = float(v) * 1e-9
    if "temperature" in cfg:
        kw["temperature"] = _parse_quantity("temperature", cfg["temperature"], _TEMP_UNITS)
    if "n_th" in cfg:
        kw["n_th"] = _parse_quantity("n_th", cfg["n_th"], {"": 1.0})
    kw["quoted_angular"] = angular
    if "protocol" in cfg:
        kw["protocol"] = bool(cfg["protocol"])
    try:
        return ExperimentParams(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentParams:
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
    return params_from_config(cfg)


def preset_path(name: str = "yig"):
    """Path of a packaged experiment config (``yig``: the YIG-sphere reference numbers, rates taken as angular)."""
    ref = resources.files("bellmag") / "presets" / f"{name}.json"
    if not ref.is_file():
        raise FileNotFoundError(f"no preset named {name!r}")
    return ref
