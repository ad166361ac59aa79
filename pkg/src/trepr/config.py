"""Experiment configuration: a strict YAML key-value tree.

Layout (every key optional; omitted keys take the baseline values)::

    experiment: populations        # populations | spectrum | trepr | sweep
    model:      {kind: SRTS, j_exchange: -10.0, ...}        # mK
    protocol:   {t_on_end: 8.0, t_total: 4000.0, sample_times: [...]}  # ns
    spectrum:   {omega: 200.0, epsilon: 0.1, field_grid: [...],
                 observe_time: 8.0, propagation: expm}
    surface:    {time_grid: [...]}                          # ns, trepr only
    sweep:      {parameter: gamma_isc, values: [0.33, 3.3, 33],
                 observable: populations}
    output:     {directory: out, format: csv}
    units:      {mk_to_rad_per_ns: 0.1309...}
    normalize:  false
    workers:    1

Grids (``sample_times``, ``field_grid``, ``time_grid``) are either explicit
lists or ``{start, stop, num, spacing: linear|log}``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
import yaml

from .model import ModelParams, UnitSystem
from .propagate import Protocol
from .response import SpectrumConfig

__all__ = [
    "ConfigError",
    "EXPERIMENTS",
    "OBSERVABLES",
    "SweepSpec",
    "OutputSpec",
    "ExperimentConfig",
    "parse_config",
    "load_config",
    "serialize_config",
    "config_to_dict",
    "config_from_dict",
    "sweep_points",
]

EXPERIMENTS = ("populations", "spectrum", "trepr", "sweep")
OBSERVABLES = ("populations", "spectrum", "trepr")
FORMATS = ("csv", "json")
_SPECTRUM_SWEEPABLE = ("omega", "epsilon", "observe_time")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending key path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple
    observable: str = "spectrum"


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "out"
    format: str = "csv"


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "populations"
    model: ModelParams = field(default_factory=ModelParams)
    protocol: Protocol = field(default_factory=Protocol)
    spectrum: SpectrumConfig = field(default_factory=SpectrumConfig)
    time_grid: tuple = (2.0, 4.0, 8.0, 16.0, 50.0, 200.0, 1000.0, 4000.0)
    sweep: SweepSpec | None = None
    output: OutputSpec = field(default_factory=OutputSpec)
    units: UnitSystem = field(default_factory=UnitSystem)
    normalize: bool = False
    workers: int = 1
    metadata: tuple = ()

    @property
    def observable(self) -> str:
        return self.sweep.observable if self.experiment == "sweep" else self.experiment


# Parsing helpers ------------------------------------------------------------


def _number(value, path, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if integer and not float(value).is_integer():
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(path, f"must be finite, got {value!r}")
    return int(value) if integer else float(value)


def _mapping(value, path, allowed):
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(path, f"expected a mapping, got {type(value).__name__}")
    for key in value:
        if key not in allowed:
            where = f"{path}.{key}" if path else str(key)
            raise ConfigError(where, f"unknown key (allowed: {', '.join(sorted(allowed))})")
    return value


def _grid(value, path):
    if isinstance(value, dict):
        spec = _mapping(value, path, ("start", "stop", "num", "spacing"))
        for key in ("start", "stop", "num"):
            if key not in spec:
                raise ConfigError(f"{path}.{key}", "required for a generated grid")
        start = _number(spec["start"], f"{path}.start")
        stop = _number(spec["stop"], f"{path}.stop")
        num = _number(spec["num"], f"{path}.num", integer=True)
        if num < 1:
            raise ConfigError(f"{path}.num", "must be >= 1")
        spacing = spec.get("spacing", "linear")
        if spacing == "linear":
            pts = np.linspace(start, stop, num)
        elif spacing == "log":
            if start <= 0 or stop <= 0:
                raise ConfigError(path, "log spacing needs positive start and stop")
            pts = np.geomspace(start, stop, num)
        else:
            raise ConfigError(f"{path}.spacing", f"expected 'linear' or 'log', got {spacing!r}")
        return tuple(float(x) for x in pts)
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(path, "expected a nonempty list or a {start, stop, num} mapping")
    return tuple(_number(v, f"{path}[{i}]") for i, v in enumerate(value))


def _build(cls, kwargs, path):
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        msg = str(exc)
        key = msg.split(":", 1)[0] if ":" in msg else ""
        names = {f.name for f in fields(cls)}
        if key in names:
            raise ConfigError(f"{path}.{key}", msg.split(":", 1)[1].strip()) from None
        raise ConfigError(path, msg) from None


def _model(raw, path="model"):
    names = [f.name for f in fields(ModelParams)]
    spec = _mapping(raw, path, names)
    kwargs = {}
    for key, value in spec.items():
        if key == "kind":
            if value not in ("SRTS", "DRTS"):
                raise ConfigError(f"{path}.kind", f"expected SRTS or DRTS, got {value!r}")
            kwargs[key] = value
        elif value is None:
            kwargs[key] = None
        else:
            kwargs[key] = _number(value, f"{path}.{key}")
    return _build(ModelParams, kwargs, path)


def _protocol(raw, path="protocol"):
    spec = _mapping(raw, path, ("t_on_end", "t_total", "sample_times"))
    kwargs = {k: _number(spec[k], f"{path}.{k}") for k in ("t_on_end", "t_total") if k in spec}
    if spec.get("sample_times") is not None:
        kwargs["sample_times"] = _grid(spec["sample_times"], f"{path}.sample_times")
    return _build(Protocol, kwargs, path)


def _spectrum(raw, path="spectrum"):
    names = [f.name for f in fields(SpectrumConfig)]
    spec = _mapping(raw, path, names)
    kwargs = {}
    for key, value in spec.items():
        if key == "field_grid":
            kwargs[key] = _grid(value, f"{path}.field_grid")
        elif key == "propagation":
            kwargs[key] = value
        else:
            kwargs[key] = _number(value, f"{path}.{key}")
    return _build(SpectrumConfig, kwargs, path)


def _sweep(raw, model, spectrum, path="sweep"):
    spec = _mapping(raw, path, ("parameter", "values", "observable"))
    if "parameter" not in spec:
        raise ConfigError(f"{path}.parameter", "required when experiment is 'sweep'")
    name = spec["parameter"]
    model_names = [f.name for f in fields(ModelParams) if f.name != "kind"]
    if name not in model_names and name not in _SPECTRUM_SWEEPABLE:
        raise ConfigError(f"{path}.parameter", f"unknown parameter {name!r}")
    if "values" not in spec:
        raise ConfigError(f"{path}.values", "required when experiment is 'sweep'")
    values = spec["values"]
    if not isinstance(values, (list, tuple)) or not values:
        raise ConfigError(f"{path}.values", "expected a nonempty list")
    values = tuple(_number(v, f"{path}.values[{i}]") for i, v in enumerate(values))
    observable = spec.get("observable", "spectrum")
    if observable not in OBSERVABLES:
        raise ConfigError(f"{path}.observable", f"expected one of {OBSERVABLES}, got {observable!r}")
    for i, v in enumerate(values):
        try:
            if name in model_names:
                model.replace(**{name: v})
            else:
                replace(spectrum, **{name: v})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}.parameter", f"{name} = {v}: {exc}") from None
    return SweepSpec(name, values, observable)


def config_from_dict(raw) -> ExperimentConfig:
    allowed = (
        "experiment", "model", "protocol", "spectrum", "surface", "sweep",
        "output", "units", "normalize", "workers", "metadata",
    )
    raw = _mapping(raw, "", allowed)
    experiment = raw.get("experiment", "populations")
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"expected one of {EXPERIMENTS}, got {experiment!r}")
    model = _model(raw.get("model"))
    protocol = _protocol(raw.get("protocol"))
    spectrum = _spectrum(raw.get("spectrum"))
    kwargs = dict(experiment=experiment, model=model, protocol=protocol, spectrum=spectrum)

    surface = _mapping(raw.get("surface"), "surface", ("time_grid",))
    if "time_grid" in surface:
        grid = _grid(surface["time_grid"], "surface.time_grid")
        if min(grid) < 0:
            raise ConfigError("surface.time_grid", "times must be >= 0")
        kwargs["time_grid"] = grid

    if experiment == "sweep":
        kwargs["sweep"] = _sweep(raw.get("sweep"), model, spectrum)
    elif raw.get("sweep") is not None:
        raise ConfigError("sweep", "only allowed when experiment is 'sweep'")

    out = _mapping(raw.get("output"), "output", ("directory", "format"))
    fmt = out.get("format", "csv")
    if fmt not in FORMATS:
        raise ConfigError("output.format", f"expected one of {FORMATS}, got {fmt!r}")
    directory = out.get("directory", "out")
    if not isinstance(directory, str) or not directory:
        raise ConfigError("output.directory", "expected a nonempty string")
    kwargs["output"] = OutputSpec(directory, fmt)

    units = _mapping(raw.get("units"), "units", ("mk_to_rad_per_ns",))
    if "mk_to_rad_per_ns" in units:
        kwargs["units"] = _build(
            UnitSystem, {"mk_to_rad_per_ns": _number(units["mk_to_rad_per_ns"], "units.mk_to_rad_per_ns")}, "units"
        )

    normalize = raw.get("normalize", False)
    if not isinstance(normalize, bool):
        raise ConfigError("normalize", f"expected true or false, got {normalize!r}")
    kwargs["normalize"] = normalize
    workers = _number(raw.get("workers", 1), "workers", integer=True)
    if workers < 1:
        raise ConfigError("workers", f"must be a positive integer, got {workers}")
    kwargs["workers"] = workers

    meta = _mapping(raw.get("metadata"), "metadata", _AnyKey())
    kwargs["metadata"] = tuple((str(k), str(v)) for k, v in meta.items())
    return ExperimentConfig(**kwargs)


class _AnyKey:
    def __contains__(self, key):
        return isinstance(key, str)

    def __iter__(self):
        return iter(("<any string>",))


def parse_config(text: str) -> ExperimentConfig:
    """Parse YAML text into a fully defaulted, validated configuration."""
    try:
        raw = yaml.safe_load(text) if text.strip() else {}
    except yaml.YAMLError as exc:
        raise ConfigError("", f"malformed YAML: {exc}") from None
    return config_from_dict(raw if raw is not None else {})


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def config_to_dict(config: ExperimentConfig) -> dict:
    """Effective configuration as plain data (explicit grids, all defaults filled)."""
    spectrum = asdict(config.spectrum)
    spectrum["field_grid"] = list(config.spectrum.field_grid)
    out = {
        "experiment": config.experiment,
        "model": asdict(config.model),
        "protocol": {
            "t_on_end": config.protocol.t_on_end,
            "t_total": config.protocol.t_total,
            "sample_times": list(config.protocol.sample_times),
        },
        "spectrum": spectrum,
        "surface": {"time_grid": list(config.time_grid)},
        "output": asdict(config.output),
        "units": {"mk_to_rad_per_ns": config.units.mk_to_rad_per_ns},
        "normalize": config.normalize,
        "workers": config.workers,
    }
    if config.sweep is not None:
        out["sweep"] = {
            "parameter": config.sweep.parameter,
            "values": list(config.sweep.values),
            "observable": config.sweep.observable,
        }
    if config.metadata:
        out["metadata"] = dict(config.metadata)
    return out


def serialize_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(config), sort_keys=False, default_flow_style=None, width=100)


def sweep_points(config: ExperimentConfig) -> list[tuple[float | None, ModelParams, SpectrumConfig]]:
    """(swept value, model, spectrum settings) for each series; one series without a sweep."""
    if config.sweep is None:
        return [(None, config.model, config.spectrum)]
    name = config.sweep.parameter
    points = []
    for v in config.sweep.values:
        if name in _SPECTRUM_SWEEPABLE:
            points.append((v, config.model, replace(config.spectrum, **{name: v})))
        else:
            points.append((v, config.model.replace(**{name: v}), config.spectrum))
    return points
