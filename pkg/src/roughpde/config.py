"""Flat ``section.key = value`` experiment configuration.

Lines starting with ``#`` or ``;`` are comments.  Values are parsed as int,
float, bool, a comma-separated list of those, or left as strings.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .drivers import DriverSpec
from .errors import ConfigError

__all__ = ["ExperimentConfig", "EXPERIMENTS", "parse_config_text", "load_config", "build_config"]

EXPERIMENTS = ("wong_zakai", "mcshane_drift", "continuity", "small_noise", "transport_demo",
               "parabolic_demo", "action")

_DRIVER_KEYS = {"kind", "dim", "horizon", "steps", "hurst", "theta", "sigma", "area_c", "eps", "refinement"}


def _scalar(text: str):
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def _value(text: str):
    text = text.strip()
    if "," in text:
        return [_scalar(p.strip()) for p in text.split(",") if p.strip()]
    return _scalar(text)


def parse_config_text(text: str) -> dict:
    """Return {section: {key: value}} from flat dotted assignments."""
    out: dict[str, dict] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        lhs, rhs = line.split("=", 1)
        lhs = lhs.strip()
        if "." not in lhs:
            raise ConfigError(f"line {lineno}: key {lhs!r} lacks a section prefix")
        section, key = lhs.split(".", 1)
        if not section or not key:
            raise ConfigError(f"line {lineno}: malformed key {lhs!r}")
        sec = out.setdefault(section, {})
        if key in sec:
            raise ConfigError(f"line {lineno}: duplicate key {lhs!r}")
        sec[key] = _value(rhs)
    return out


def _as_list(v) -> list:
    return list(v) if isinstance(v, list) else [v]


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    driver: DriverSpec
    fields: dict
    coeffs: dict
    phi: dict
    grid: dict
    ladder: tuple = ()
    out_dir: str = "out"
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.kind!r}; choose from {EXPERIMENTS}")
        if any(b <= a for a, b in zip(self.ladder, self.ladder[1:])):
            raise ConfigError(f"refinement ladder must be strictly increasing, got {list(self.ladder)}")

    def section(self, name: str) -> dict:
        return dict(self.extra.get(name, {}))

    def option(self, section: str, key: str, default=None):
        return self.extra.get(section, {}).get(key, default)


def _preset_section(sec: dict, default: str) -> dict:
    sec = dict(sec)
    sec.setdefault("preset", default)
    return sec


def build_config(kind: str, sections: dict, seed: int | None = None, out_dir: str | None = None) -> ExperimentConfig:
    sections = {k: dict(v) for k, v in sections.items()}
    run = sections.pop("run", {})
    if seed is None:
        seed = run.get("seed", 0)
    if not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    out_dir = out_dir or run.get("out", "out")
    drv = sections.pop("driver", {})
    unknown = set(drv) - _DRIVER_KEYS
    if unknown:
        raise ConfigError(f"unknown driver keys: {sorted(unknown)}")
    ladder = tuple(int(v) for v in _as_list(sections.pop("ladder", {}).get("levels", [])))
    try:
        spec = DriverSpec(seed=seed, **drv)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return ExperimentConfig(
        kind=kind,
        driver=spec,
        fields=_preset_section(sections.pop("fields", {}), "nonlinear"),
        coeffs=_preset_section(sections.pop("coeffs", {}), "heat"),
        phi=_preset_section(sections.pop("phi", {}), "gaussian"),
        grid=sections.pop("grid", {}),
        ladder=ladder,
        out_dir=str(out_dir),
        seed=seed,
        extra=sections | {"run": run},
    )


def load_config(path, kind: str, seed: int | None = None, out_dir: str | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return build_config(kind, parse_config_text(text), seed, out_dir)
