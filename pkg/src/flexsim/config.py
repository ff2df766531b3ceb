"""YAML run configuration and sweep specifications.

A run config has three sections::

    arch:      array and memory parameters (ArchConfig fields)
    workload:  layers, an ``mlp`` generator, or a path to a workload file
    energy:    per-event weights (every class in ENERGY_CLASSES)

Unknown keys are rejected with the dotted key in the error.
"""

from __future__ import annotations

import copy
import itertools
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import yaml

from .errors import ConfigError
from .sim import DEFAULT_ENERGY_WEIGHTS, ENERGY_CLASSES, ArchConfig, LayerSpec, mlp_layers, with_pruning
from .tensor import PrecisionMode

TOP_KEYS = {"schema", "name", "seed", "arch", "workload", "energy"}
ARCH_KEYS = {f.name for f in fields(ArchConfig)} - {"energy_weights"}
WORKLOAD_KEYS = {"name", "layers", "mlp", "prune", "notes"}
LAYER_KEYS = {"name", "m", "k", "n", "weight_sr", "input_sr", "mode", "prune", "values"}
MLP_KEYS = {"width", "depth", "batch", "in_dim", "out_dim", "weight_sr", "input_sr", "mode"}
SWEEP_KEYS = {"name", "kind", "config", "axes", "seed", "tile"}


@dataclass
class RunConfig:
    arch: ArchConfig
    layers: list
    energy: dict
    name: str = "run"
    seed: int = 0
    raw: dict = field(default_factory=dict)


def _reject_unknown(section: dict, allowed: set, prefix: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(prefix or "<root>", "expected a mapping")
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{prefix}.{key}" if prefix else str(key), "unknown key")


def load_yaml(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read file: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"not valid YAML: {exc}") from None
    return {} if data is None else data


def _arch(raw: dict) -> ArchConfig:
    _reject_unknown(raw, ARCH_KEYS, "arch")
    kw = dict(raw)
    if "mode" in kw:
        try:
            kw["mode"] = PrecisionMode.parse(kw["mode"])
        except ValueError as exc:
            raise ConfigError("arch.mode", str(exc)) from None
    for key, value in kw.items():
        if key != "mode" and not isinstance(value, (int, bool)):
            raise ConfigError(f"arch.{key}", f"expected an integer or flag, got {value!r}")
    return ArchConfig(**kw)


def _layers(raw: Any, base: Path) -> list:
    if isinstance(raw, str):
        raw = load_yaml(base / raw)
        if "workload" in raw:
            raw = raw["workload"]
    _reject_unknown(raw, WORKLOAD_KEYS, "workload")
    if ("layers" in raw) == ("mlp" in raw):
        raise ConfigError("workload", "give exactly one of 'layers' or 'mlp'")
    if "mlp" in raw:
        spec = raw["mlp"]
        _reject_unknown(spec, MLP_KEYS, "workload.mlp")
        for key in ("width", "depth", "batch"):
            if key not in spec:
                raise ConfigError(f"workload.mlp.{key}", "missing")
        try:
            layers = mlp_layers(**spec)
        except TypeError as exc:
            raise ConfigError("workload.mlp", str(exc)) from None
    else:
        if not isinstance(raw["layers"], list) or not raw["layers"]:
            raise ConfigError("workload.layers", "expected a non-empty list")
        layers = []
        for i, entry in enumerate(raw["layers"]):
            where = f"workload.layers[{i}]"
            _reject_unknown(entry, LAYER_KEYS, where)
            for key in ("m", "k", "n"):
                if key not in entry:
                    raise ConfigError(f"{where}.{key}", "missing")
            kw = dict(entry)
            kw.setdefault("name", f"layer{i}")
            layers.append(LayerSpec(**kw))
    if raw.get("prune"):
        layers = with_pruning(layers, float(raw["prune"]))
    return layers


def _energy(raw: Optional[dict]) -> dict:
    weights = dict(DEFAULT_ENERGY_WEIGHTS)
    if raw is None:
        return weights
    _reject_unknown(raw, set(ENERGY_CLASSES), "energy")
    for key, value in raw.items():
        if not isinstance(value, (int, float)) or value < 0:
            raise ConfigError(f"energy.{key}", "weights must be non-negative numbers")
        weights[key] = float(value)
    return weights


def parse_config(raw: dict, base: Path = Path(".")) -> RunConfig:
    _reject_unknown(raw, TOP_KEYS, "")
    if raw.get("schema", 1) != 1:
        raise ConfigError("schema", f"unsupported schema version {raw['schema']!r}")
    if "workload" not in raw:
        raise ConfigError("workload", "missing")
    arch = _arch(raw.get("arch") or {})
    energy = _energy(raw.get("energy"))
    arch = ArchConfig(**{**{f.name: getattr(arch, f.name) for f in fields(ArchConfig)},
                         "energy_weights": energy})
    return RunConfig(arch=arch, layers=_layers(raw["workload"], base), energy=energy,
                     name=str(raw.get("name", "run")), seed=int(raw.get("seed", 0)), raw=raw)


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(load_yaml(path), path.parent)


# ----------------------------------------------------------------------------
# sweeps


@dataclass
class ExperimentSpec:
    name: str
    kind: str                         # "simulate" or "formats"
    axes: dict                        # dotted key -> list of values
    base: Optional[dict] = None       # raw run config for simulate sweeps
    base_dir: Path = Path(".")
    seed: int = 0
    tile: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        n = 1
        for values in self.axes.values():
            n *= len(values)
        return n

    def points(self) -> list:
        keys = list(self.axes)
        return [dict(zip(keys, combo)) for combo in itertools.product(*self.axes.values())]


DEFAULT_FORMAT_TILES = {"int16": 64, "int8": 128, "int4": 256}


def _set_dotted(raw: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = raw
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(dotted, "axis does not name a config key")
    node[parts[-1]] = value


def _check_axis(dotted: str) -> None:
    parts = dotted.split(".")
    allowed = {"arch": ARCH_KEYS, "workload": WORKLOAD_KEYS, "energy": set(ENERGY_CLASSES)}
    if dotted == "seed":
        return
    if len(parts) == 3 and parts[:2] == ["workload", "mlp"] and parts[2] in MLP_KEYS:
        return
    if len(parts) != 2 or parts[0] not in allowed or parts[1] not in allowed[parts[0]]:
        raise ConfigError(f"axes.{dotted}", "axis does not name a config key")


def apply_point(base: dict, point: dict) -> dict:
    raw = copy.deepcopy(base)
    for key, value in point.items():
        _set_dotted(raw, key, value)
    return raw


def load_sweep(path) -> ExperimentSpec:
    path = Path(path)
    raw = load_yaml(path)
    _reject_unknown(raw, SWEEP_KEYS, "")
    kind = raw.get("kind", "simulate")
    axes = raw.get("axes") or {}
    if not isinstance(axes, dict):
        raise ConfigError("axes", "expected a mapping of key -> value list")
    for key, values in axes.items():
        if not isinstance(values, list) or not values:
            raise ConfigError(f"axes.{key}", "expected a non-empty list")
    spec = ExperimentSpec(name=str(raw.get("name", path.stem)), kind=kind, axes=axes,
                          base_dir=path.parent, seed=int(raw.get("seed", 0)))
    if kind == "simulate":
        if "config" not in raw:
            raise ConfigError("config", "simulate sweeps need a base config")
        ref = raw["config"]
        spec.base = load_yaml(path.parent / ref) if isinstance(ref, str) else ref
        if isinstance(ref, str):
            spec.base_dir = (path.parent / ref).parent
        for key in axes:
            _check_axis(key)
        parse_config(spec.base, spec.base_dir)           # validate early
    elif kind == "formats":
        for key in axes:
            if key not in ("sr", "mode"):
                raise ConfigError(f"axes.{key}", "formats sweeps take 'sr' and 'mode' axes")
        axes.setdefault("sr", list(range(0, 101, 5)))
        axes.setdefault("mode", ["int16", "int8", "int4"])
        tile = raw.get("tile") or {}
        _reject_unknown(tile, set(DEFAULT_FORMAT_TILES), "tile")
        spec.tile = {**DEFAULT_FORMAT_TILES, **tile}
    else:
        raise ConfigError("kind", f"unknown sweep kind {kind!r}")
    return spec


def load_grid_config(path):
    """Hash-grid parameters for the encoding benchmark."""
    from .nerf import HashGridConfig
    raw = load_yaml(path)
    allowed = {f.name for f in fields(HashGridConfig)}
    _reject_unknown(raw, allowed, "grid")
    try:
        return HashGridConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError("grid", str(exc)) from None
