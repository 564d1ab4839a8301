"""Flat ``key = value`` experiment configuration.

One setting per line, ``#`` starts a comment, blank lines are ignored.
Unknown keys are rejected so typos do not silently fall back to defaults.
"""

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError

EXAMPLE_TAGS = ("heat_rod", "fhn", "heat_2d")


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float_list(text):
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    items = [s for s in str(text).replace(",", " ").split() if s]
    return tuple(float(v) for v in items)


def _opt_int(text):
    if text is None or str(text).strip().lower() in ("", "none", "auto"):
        return None
    return int(text)


def _opt_float(text):
    if text is None or str(text).strip().lower() in ("", "none", "auto"):
        return None
    return float(text)


@dataclass(frozen=True)
class ExperimentConfig:
    """All knobs of an experiment; see ``configs/*.cfg`` for annotated examples.

    Attributes
    ----------
    example : {"heat_rod", "fhn", "heat_2d"}
    lam_bar, a, length, mu
        Example parameters (``length`` is the rod or FitzHugh-Nagumo interval).
    n : int
        Interior nodes per axis.
    basis : {"auto", "numeric", "analytic"}
        ``auto`` is numeric in 1D and analytic in 2D.
    trace_stencil : {"three_point", "adjacent"}
    rho : float
        Instability threshold; ignored when ``N`` is set.
    N : int or None
        Force the number of controlled modes.
    mode : {"simple", "perturbed"}
    margin, gamma1, gammas
        Ladder controls; an explicit ``gammas`` list wins.
    dt, T_end, record_every
        Time stepping.
    plant : {"linear", "nonlinear"}
    control : bool
        ``False`` runs the open loop.
    initial, amplitude
        Initial profile (``bump``, ``random``, ``mode1``) and its scale.
    window_fraction, floor, target_mu
        Decay fit settings.
    lift_gammas : tuple of float
        Sweep used by the ``lift`` command.
    dps : int
        Digits for the gain algebra.
    draws : int
        Random draws per suite in ``verify``.
    fault : str
        ``verify`` fault injection (``none`` or ``asymmetric_B``).
    seed : int
    out : str
        Output directory.
    """

    example: str = "heat_rod"
    lam_bar: float = 30.0
    a: float = 0.25
    length: float = 1.0
    mu: float = 17.0
    include_k1_zero: bool = False
    n: int = 200
    basis: str = "auto"
    trace_stencil: str = "three_point"
    rho: float = 40.0
    N: int | None = None
    mode: str = "simple"
    margin: float = 5.0
    gamma1: float | None = None
    gammas: tuple = ()
    dt: float = 1e-4
    T_end: float = 1.0
    record_every: int = 100
    plant: str = "linear"
    control: bool = True
    initial: str = "bump"
    amplitude: float = 1.0
    window_fraction: float = 0.5
    floor: float = 1e-10
    target_mu: float = 0.0
    lift_gammas: tuple = (80.0, 160.0, 320.0, 640.0)
    dps: int = 40
    draws: int = 100
    fault: str = "none"
    seed: int = 0
    out: str = "out"

    def __post_init__(self):
        if self.example not in EXAMPLE_TAGS:
            raise ConfigError(f"unknown example {self.example!r}; expected one of {EXAMPLE_TAGS}")
        choices = {
            "basis": ("auto", "numeric", "analytic"),
            "trace_stencil": ("three_point", "adjacent"),
            "mode": ("simple", "perturbed"),
            "plant": ("linear", "nonlinear"),
            "initial": ("bump", "random", "mode1"),
            "fault": ("none", "asymmetric_B"),
        }
        for key, allowed in choices.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(f"{key} must be one of {allowed}, got {getattr(self, key)!r}")
        for f in fields(self):
            v = getattr(self, f.name)
            vals = v if isinstance(v, tuple) else (v,)
            for x in vals:
                if isinstance(x, float) and not math.isfinite(x):
                    raise ConfigError(f"{f.name} must be finite")
        if self.dt <= 0 or self.T_end < 0:
            raise ConfigError("need dt > 0 and T_end >= 0")
        if self.n < 3 or self.record_every < 1 or self.draws < 0 or self.dps < 16:
            raise ConfigError("n >= 3, record_every >= 1, draws >= 0 and dps >= 16 are required")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def with_overrides(self, pairs):
        """Apply ``key=value`` strings (as given to ``--set``)."""
        updates = {}
        for item in pairs:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not key=value")
            k, v = item.split("=", 1)
            updates[k.strip()] = v.strip()
        return replace(self, **_coerce(updates))


_PARSERS = {
    "include_k1_zero": _bool,
    "control": _bool,
    "N": _opt_int,
    "gamma1": _opt_float,
    "gammas": _float_list,
    "lift_gammas": _float_list,
}


def _coerce(raw: dict) -> dict:
    known = {f.name: f for f in fields(ExperimentConfig)}
    out = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        parser = _PARSERS.get(key)
        if parser is None:
            default = known[key].default
            parser = type(default) if not isinstance(default, bool) else _bool
        try:
            out[key] = parser(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None
    return out


def parse_config(text: str) -> ExperimentConfig:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        k, v = line.split("=", 1)
        k = k.strip()
        if k in raw:
            raise ConfigError(f"line {lineno}: duplicate key {k!r}")
        raw[k] = v.strip()
    return ExperimentConfig(**_coerce(raw))


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)
