"""Daemon configuration: YAML files with per-plugin operator sections.

Template sections hold bracketed sensor expressions verbatim::

    role: pusher
    connect: 127.0.0.1:9400
    cache: {capacity_s: 180, interval_s: 1}
    sources:
      - plugin: tester
        sensors: 1000
    operators:
      regressor:
        - name: r0
          mode: online
          interval_ms: 250
          template:
            input: ["<bottomup, filter cpu>cpu-cycles"]
            output: ["<bottomup-1>pred-power"]
          params: {target: "<bottomup-1>power"}

Validation failures name the file and the offending key path; YAML syntax
errors keep the parser's line/column.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .tree import HierarchySpec

DEFAULT_CACHE_CAPACITY_S = 180.0
DEFAULT_CACHE_INTERVAL_S = 1.0
DEFAULT_REST_LISTEN = "127.0.0.1:0"


class ConfigFileError(ValueError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = str(path)


def _parse_address(text: str, what: str) -> tuple[str, int]:
    host, sep, port = str(text).rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"{what} must look like host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


@dataclass
class CacheConfig:
    capacity_s: float = DEFAULT_CACHE_CAPACITY_S
    interval_s: float = DEFAULT_CACHE_INTERVAL_S

    @property
    def capacity_ns(self) -> int:
        return int(self.capacity_s * 1e9)

    @property
    def interval_ns(self) -> int:
        return int(self.interval_s * 1e9)


@dataclass
class DaemonConfig:
    role: str                                  # "pusher" | "collector"
    connect: tuple[str, int] | None = None     # pusher uplink
    listen: tuple[str, int] | None = None      # collector data port
    rest_listen: tuple[str, int] | None = None
    store_dir: str | None = None               # collector
    cache: CacheConfig = field(default_factory=CacheConfig)
    hierarchy: HierarchySpec | None = None
    sources: list[dict] = field(default_factory=list)
    source_interval_s: float = DEFAULT_CACHE_INTERVAL_S
    operators: dict[str, list[dict]] = field(default_factory=dict)
    jobs_file: str | None = None
    workers: int = 4

    def validate(self) -> None:
        if self.role not in ("pusher", "collector"):
            raise ValueError(f"role must be pusher or collector, got {self.role!r}")
        # A pusher without a connect address keeps readings local; that is a
        # supported configuration (standalone overhead measurements).
        if self.role == "collector":
            if self.listen is None:
                raise ValueError("collector needs a listen address")
            if self.store_dir is None:
                raise ValueError("collector needs a store_dir")


def config_from_dict(d: dict, origin: str = "<dict>") -> DaemonConfig:
    try:
        return _config_from_dict(d)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigFileError(origin, str(exc)) from None


def _config_from_dict(d: dict) -> DaemonConfig:
    if not isinstance(d, dict):
        raise ValueError("top level must be a mapping")
    known = {"role", "connect", "listen", "rest_listen", "store_dir", "cache",
             "hierarchy", "sources", "source_interval_s", "operators",
             "jobs_file", "workers"}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown keys: {sorted(unknown)}")
    if "role" not in d:
        raise ValueError("missing role")

    cache = CacheConfig()
    for key, value in (d.get("cache") or {}).items():
        if key not in ("capacity_s", "interval_s"):
            raise ValueError(f"cache: unknown key {key!r}")
        setattr(cache, key, float(value))

    hierarchy = None
    if d.get("hierarchy"):
        hierarchy = HierarchySpec(tuple(str(p) for p in d["hierarchy"]))

    operators = {}
    for plugin, sections in (d.get("operators") or {}).items():
        if not isinstance(sections, list):
            raise ValueError(f"operators.{plugin} must be a list of sections")
        operators[str(plugin)] = [dict(s) for s in sections]

    rest_raw = d.get("rest_listen", DEFAULT_REST_LISTEN)  # explicit null disables
    cfg = DaemonConfig(
        role=str(d["role"]),
        connect=_parse_address(d["connect"], "connect") if d.get("connect") else None,
        listen=_parse_address(d["listen"], "listen") if d.get("listen") else None,
        rest_listen=_parse_address(rest_raw, "rest_listen") if rest_raw else None,
        store_dir=d.get("store_dir"),
        cache=cache,
        hierarchy=hierarchy,
        sources=[dict(s) for s in d.get("sources") or []],
        source_interval_s=float(d.get("source_interval_s",
                                      DEFAULT_CACHE_INTERVAL_S)),
        operators=operators,
        jobs_file=d.get("jobs_file"),
        workers=int(d.get("workers", 4)),
    )
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> DaemonConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigFileError(path, str(exc)) from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
        raise ConfigFileError(path, f"{where}{exc}") from None
    return config_from_dict(raw or {}, origin=str(path))


def config_to_dict(cfg: DaemonConfig) -> dict:
    """Inverse of config_from_dict (round-trips through YAML)."""
    out: dict = {"role": cfg.role}
    if cfg.connect:
        out["connect"] = f"{cfg.connect[0]}:{cfg.connect[1]}"
    if cfg.listen:
        out["listen"] = f"{cfg.listen[0]}:{cfg.listen[1]}"
    if cfg.rest_listen:
        out["rest_listen"] = f"{cfg.rest_listen[0]}:{cfg.rest_listen[1]}"
    if cfg.store_dir:
        out["store_dir"] = cfg.store_dir
    out["cache"] = {"capacity_s": cfg.cache.capacity_s,
                    "interval_s": cfg.cache.interval_s}
    if cfg.hierarchy:
        out["hierarchy"] = list(cfg.hierarchy.level_patterns)
    if cfg.sources:
        out["sources"] = cfg.sources
    out["source_interval_s"] = cfg.source_interval_s
    if cfg.operators:
        out["operators"] = cfg.operators
    if cfg.jobs_file:
        out["jobs_file"] = cfg.jobs_file
    out["workers"] = cfg.workers
    return out


def dump_config(cfg: DaemonConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)
