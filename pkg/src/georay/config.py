"""Scenario files.

A scenario is a flat TOML file; the only table is ``[params]`` (metric
parameters).  Example::

    metric = "poincare_half_plane"
    start = [0.0, 1.0]
    direction = [1.0, 0.0]
    formulation = "both"
    h = 1e-3
    max_S = 2.0
    tolerance = 1e-5

Relative ``params.file`` paths resolve against the scenario file's directory.
"""

from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .geodesic import ALPHA_FORM, FORMS
from .metric import MetricField, builtin_metric


class ScenarioError(ValueError):
    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key
        super().__init__(message)


FORMULATIONS = FORMS + ("both",)


@dataclass
class Scenario:
    metric: str
    params: dict = field(default_factory=dict)
    start: list = field(default_factory=list)
    direction: list = field(default_factory=list)
    formulation: str = ALPHA_FORM
    h: float = 1e-3
    max_S: Optional[float] = None
    max_r: Optional[float] = None
    fan_count: int = 64
    fan_window: list = field(default_factory=lambda: [0.0, 2 * math.pi])
    levels: list = field(default_factory=list)
    huygens: list = field(default_factory=list)
    increment: list = field(default_factory=list)
    discs: bool = False
    steps: list = field(default_factory=list)
    lam: float = 1e-3
    dr: float = 1e-3
    halvings: int = 3
    tolerance: float = 1e-5
    csv: Optional[str] = None
    svg: Optional[str] = None
    report: Optional[str] = None
    seed: int = 0
    threads: int = 1

    @property
    def limit(self) -> dict:
        return {"max_S": self.max_S} if self.max_S is not None else {"max_r": self.max_r}

    @property
    def forms(self) -> tuple:
        return FORMS if self.formulation == "both" else (self.formulation,)

    def build_metric(self) -> MetricField:
        params = dict(self.params)
        if self.metric == "euclidean" and "dim" not in params and self.start:
            params["dim"] = len(self.start)  # a minimal flat scenario need not repeat it
        return builtin_metric(self.metric, params)


KEYS = {f.name for f in fields(Scenario)}
_FLOAT_KEYS = ("h", "max_S", "max_r", "lam", "dr", "tolerance")
_INT_KEYS = ("fan_count", "halvings", "seed", "threads")
_LIST_KEYS = ("start", "direction", "fan_window", "levels", "huygens", "increment", "steps")
_PATH_KEYS = ("csv", "svg", "report")


def _finite(key: str, v: Any) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"{key} must be a number, got {v!r}", key)
    if not math.isfinite(v):
        raise ScenarioError(f"{key} must be finite", key)
    return float(v)


def scenario_from_mapping(data: dict, base_dir: Optional[Path] = None) -> Scenario:
    """Validate a parsed mapping and fill defaults."""
    data = dict(data)
    unknown = set(data) - KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise ScenarioError(f"unknown key {key!r}", key)
    if "metric" not in data:
        raise ScenarioError("missing required key 'metric'", "metric")
    if not isinstance(data["metric"], str):
        raise ScenarioError("metric must be a string", "metric")
    params = data.get("params", {})
    if not isinstance(params, dict) or any(isinstance(v, dict) for v in params.values()):
        raise ScenarioError("params must be a flat table", "params")
    params = dict(params)
    if "file" in params and base_dir is not None and not Path(params["file"]).is_absolute():
        params["file"] = str(base_dir / params["file"])
    data["params"] = params
    for key in _FLOAT_KEYS:
        if key in data and data[key] is not None:
            data[key] = _finite(key, data[key])
    for key in _INT_KEYS:
        if key in data:
            v = data[key]
            if isinstance(v, bool) or not isinstance(v, int):
                raise ScenarioError(f"{key} must be an integer, got {v!r}", key)
    for key in _LIST_KEYS:
        if key in data:
            if not isinstance(data[key], list):
                raise ScenarioError(f"{key} must be a list of numbers", key)
            data[key] = [_finite(key, v) for v in data[key]]
    for key in _PATH_KEYS:
        if key in data and data[key] is not None and not isinstance(data[key], str):
            raise ScenarioError(f"{key} must be a path string", key)
    if "discs" in data and not isinstance(data["discs"], bool):
        raise ScenarioError("discs must be true or false", "discs")

    sc = Scenario(**data)
    if not sc.h > 0:
        raise ScenarioError("h must be positive", "h")
    if sc.formulation not in FORMULATIONS:
        raise ScenarioError(f"formulation must be one of {FORMULATIONS}", "formulation")
    if sc.max_S is not None and sc.max_r is not None:
        raise ScenarioError("give only one of max_S and max_r", "max_S")
    for key in ("max_S", "max_r"):
        v = getattr(sc, key)
        if v is not None and not v > 0:
            raise ScenarioError(f"{key} must be positive", key)
    for key in ("lam", "dr", "tolerance"):
        if not getattr(sc, key) > 0:
            raise ScenarioError(f"{key} must be positive", key)
    if sc.fan_count < 3:
        raise ScenarioError("fan_count must be at least 3", "fan_count")
    if sc.threads < 1:
        raise ScenarioError("threads must be at least 1", "threads")
    if sc.halvings < 1:
        raise ScenarioError("halvings must be at least 1", "halvings")
    if len(sc.fan_window) != 2 or not sc.fan_window[1] > sc.fan_window[0]:
        raise ScenarioError("fan_window must be [lo, hi] with hi > lo", "fan_window")
    for key, n in (("huygens", 2), ("increment", 2)):
        v = getattr(sc, key)
        if v and (len(v) != n or not v[1] > v[0]):
            raise ScenarioError(f"{key} must be [S_low, S_high] with S_high > S_low", key)
    if sc.steps:
        halving = all(math.isclose(a, 2 * b, rel_tol=1e-9) for a, b in zip(sc.steps, sc.steps[1:]))
        if len(sc.steps) < 3 or not halving:
            raise ScenarioError("steps needs at least three sizes, each half the previous", "steps")
    if sc.start and sc.direction and len(sc.start) != len(sc.direction):
        raise ScenarioError("start and direction differ in length", "direction")
    if sc.direction and not any(sc.direction):
        raise ScenarioError("direction must be nonzero", "direction")
    return sc


def parse_toml(text: str, source: str = "<string>") -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        found = re.search(r"line (\d+)", str(exc))
        # errors "at end of document" carry no position: blame the last line
        line = int(found.group(1)) if found else max(1, len(text.rstrip("\n").split("\n")))
        raise ScenarioError(f"{source}, line {line}: parse error: {exc}") from None


def load_scenario(path, overrides: Optional[dict] = None) -> Scenario:
    """Read, merge ``overrides`` (CLI flags win) and validate a scenario file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from None
    data = parse_toml(text, str(path))
    data.update(overrides or {})
    return scenario_from_mapping(data, path.parent)


def require(sc: Scenario, *keys: str) -> None:
    for key in keys:
        if key == "limit":
            if sc.max_S is None and sc.max_r is None:
                raise ScenarioError("one of max_S or max_r is required", "max_S")
        elif not getattr(sc, key):
            raise ScenarioError(f"missing required key {key!r}", key)
