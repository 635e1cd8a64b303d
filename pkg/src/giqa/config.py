"""Run configuration: one structured file shared by all subcommands."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import yaml

from . import grounded_text as gtx
from .backends import (
    BackendConfig,
    ChatCompletionsClient,
    HttpDetector,
    HttpJudge,
    HttpVerifier,
    MockCompleter,
    MockDetector,
    MockJudge,
    MockVerifier,
)
from .coords import GridSpec
from .pipeline import Backends
from .refine import RefineConfig


class ConfigError(ValueError):
    pass


@dataclass
class BackendSpec:
    kind: str = "http"  # http | mock
    endpoint: str = ""
    model: str = ""
    timeout: float = 30.0
    max_retries: int = 2
    concurrency: int = 4
    box_threshold: float = 0.35
    fixtures: str = ""  # mock only: JSON fixture file
    default: Optional[str] = None  # mock only: fallback reply


@dataclass
class RunConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    refine: RefineConfig = field(default_factory=RefineConfig)
    seed: int = 0
    workers: int = 1
    mode: str = gtx.GRID
    backends: dict = field(default_factory=dict)  # role -> BackendSpec


_TOP_KEYS = {"grid", "refine", "seed", "workers", "mode", "backends"}
_ROLES = {"completer", "detector", "verifier", "judge"}


def _build(cls, data: dict, context: str):
    known = {f for f in cls.__dataclass_fields__}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in {context}: {', '.join(sorted(unknown))}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid {context}: {e}")


def load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    grid = _build(GridSpec, data.get("grid", {}), "grid")
    refine = _build(RefineConfig, data.get("refine", {}), "refine")
    mode = data.get("mode", gtx.GRID)
    if mode not in (gtx.GRID, gtx.NORM):
        raise ConfigError(f"mode must be 'grid' or 'norm', got {mode!r}")
    backends = {}
    raw_backends = data.get("backends", {})
    unknown_roles = set(raw_backends) - _ROLES
    if unknown_roles:
        raise ConfigError(f"unknown backend roles: {', '.join(sorted(unknown_roles))}")
    for role, spec in raw_backends.items():
        backends[role] = _build(BackendSpec, spec or {}, f"backends.{role}")
    return RunConfig(
        grid=grid,
        refine=refine,
        seed=int(data.get("seed", 0)),
        workers=int(data.get("workers", 1)),
        mode=mode,
        backends=backends,
    )


def _load_fixtures(path: str, context: str) -> dict:
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot load fixtures for {context}: {e}")


def _backend_config(spec: BackendSpec, seed: int) -> BackendConfig:
    return BackendConfig(
        endpoint=spec.endpoint,
        model=spec.model,
        timeout=spec.timeout,
        max_retries=spec.max_retries,
        concurrency=spec.concurrency,
        request_seed=seed,
        box_threshold=spec.box_threshold,
    )


def build_completer(spec: BackendSpec, seed: int):
    if spec.kind == "mock":
        return MockCompleter(
            fixtures=_load_fixtures(spec.fixtures, "completer"), default=spec.default
        )
    if not spec.endpoint:
        raise ConfigError("completer backend needs an endpoint")
    return ChatCompletionsClient(_backend_config(spec, seed))


def build_detector(spec: BackendSpec, seed: int):
    if spec.kind == "mock":
        return MockDetector(
            fixtures=_load_fixtures(spec.fixtures, "detector"),
            box_threshold=spec.box_threshold,
        )
    if not spec.endpoint:
        raise ConfigError("detector backend needs an endpoint")
    return HttpDetector(_backend_config(spec, seed))


def build_verifier(spec: BackendSpec, seed: int):
    if spec.kind == "mock":
        return MockVerifier(
            fixtures=_load_fixtures(spec.fixtures, "verifier"),
            default=spec.default or "Yes",
        )
    if not spec.endpoint:
        raise ConfigError("verifier backend needs an endpoint")
    return HttpVerifier(ChatCompletionsClient(_backend_config(spec, seed)))


def build_judge(spec: BackendSpec, seed: int):
    if spec.kind == "mock":
        fixtures = {k: int(v) for k, v in _load_fixtures(spec.fixtures, "judge").items()}
        default = int(spec.default) if spec.default is not None else 4
        return MockJudge(fixtures=fixtures, default=default)
    if not spec.endpoint:
        raise ConfigError("judge backend needs an endpoint")
    return HttpJudge(ChatCompletionsClient(_backend_config(spec, seed)))


def build_backends(cfg: RunConfig, roles: set[str]) -> Backends:
    """Construct the backend bundle for the roles a subcommand needs."""
    builders = {
        "completer": build_completer,
        "detector": build_detector,
        "verifier": build_verifier,
        "judge": build_judge,
    }
    built: dict = {"completer": None, "detector": None, "verifier": None, "judge": None}
    for role in roles:
        spec = cfg.backends.get(role)
        if spec is None:
            raise ConfigError(f"no backend configured for role {role!r}")
        built[role] = builders[role](spec, cfg.seed)
    return Backends(**built)
