"""Framework configuration: dataclasses plus a nested-YAML loader.

Every knob has a default so a config file only needs to state what it
changes. Paths in the file are resolved relative to the file's directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml


class ConfigError(Exception):
    """Bad or missing configuration."""


@dataclass
class LLMRoleEntry:
    provider: str = "openai"
    model: str = "gpt-4"
    temperature: float = 0.0
    max_tokens: int = 2048


@dataclass
class LLMConfig:
    # backend: "provider" (HTTP), "scripted" (canned replies), or "replay"
    backend: str = "provider"
    script: str | None = None
    endpoint: str = "https://api.openai.com/v1"
    api_key_env: str = "LLM_API_KEY"
    default: LLMRoleEntry = field(default_factory=LLMRoleEntry)
    roles: dict[str, LLMRoleEntry] = field(default_factory=dict)

    def resolve(self, role: str) -> LLMRoleEntry:
        return self.roles.get(role, self.default)


@dataclass
class ExecutionConfig:
    mode: str = "local"  # "local" | "container"
    timeout_seconds: float = 120.0
    init_timeout_seconds: float = 30.0
    container_image: str = "python:3.10-slim"
    container_network: bool = False


@dataclass
class VerifierConfig:
    forbidden_modules: list[str] = field(default_factory=list)
    # Dynamic-evaluation primitives defeat static checking, so they are
    # denied out of the box.
    forbidden_functions: list[str] = field(
        default_factory=lambda: ["eval", "exec", "__import__", "getattr"]
    )
    plugin_only: bool = False
    policy_file: str | None = None


@dataclass
class CodegenConfig:
    max_regenerations: int = 3
    top_k: int = 3
    prompt_token_budget: int = 16000


@dataclass
class PlannerConfig:
    merge_plans: bool = True


@dataclass
class SessionConfig:
    expiry_seconds: float = 3600.0


@dataclass
class RoundConfig:
    max_posts: int = 20


@dataclass
class AppConfig:
    llm: LLMConfig = field(default_factory=LLMConfig)
    execution: ExecutionConfig = field(default_factory=ExecutionConfig)
    verifier: VerifierConfig = field(default_factory=VerifierConfig)
    codegen: CodegenConfig = field(default_factory=CodegenConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    session: SessionConfig = field(default_factory=SessionConfig)
    round: RoundConfig = field(default_factory=RoundConfig)
    plugins_dir: str | None = None
    examples_planner_dir: str | None = None
    examples_codegen_dir: str | None = None
    experience_dir: str | None = None
    data_dir: str = "data"


def _update_dataclass(obj: Any, values: dict[str, Any], path: str) -> None:
    for key, value in values.items():
        if not hasattr(obj, key):
            raise ConfigError(f"unknown config key: {path}.{key}")
        setattr(obj, key, value)


def _resolve_path(value: str | None, base: Path) -> str | None:
    if value is None:
        return None
    p = Path(os.path.expanduser(value))
    return str(p if p.is_absolute() else base / p)


def load_config(path: str | Path) -> AppConfig:
    """Load an :class:`AppConfig` from a YAML file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    raw = yaml.safe_load(path.read_text()) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping: {path}")
    return config_from_dict(raw, base_dir=path.parent)


def config_from_dict(raw: dict[str, Any], base_dir: str | Path = ".") -> AppConfig:
    base = Path(base_dir)
    cfg = AppConfig()

    llm = dict(raw.get("llm") or {})
    for simple in ("backend", "script", "endpoint", "api_key_env"):
        if simple in llm:
            setattr(cfg.llm, simple, llm.pop(simple))
    if "default" in llm:
        _update_dataclass(cfg.llm.default, llm.pop("default") or {}, "llm.default")
    for role, entry in llm.items():
        role_entry = LLMRoleEntry(**vars(cfg.llm.default))
        _update_dataclass(role_entry, entry or {}, f"llm.{role}")
        cfg.llm.roles[role] = role_entry
    cfg.llm.script = _resolve_path(cfg.llm.script, base)

    for section, obj in (
        ("execution", cfg.execution),
        ("verifier", cfg.verifier),
        ("codegen", cfg.codegen),
        ("planner", cfg.planner),
        ("session", cfg.session),
        ("round", cfg.round),
    ):
        if section in raw:
            _update_dataclass(obj, raw[section] or {}, section)
    cfg.verifier.policy_file = _resolve_path(cfg.verifier.policy_file, base)

    plugins = raw.get("plugins") or {}
    cfg.plugins_dir = _resolve_path(plugins.get("dir"), base)
    examples = raw.get("examples") or {}
    cfg.examples_planner_dir = _resolve_path(examples.get("planner_dir"), base)
    cfg.examples_codegen_dir = _resolve_path(examples.get("codegen_dir"), base)
    experience = raw.get("experience") or {}
    cfg.experience_dir = _resolve_path(experience.get("dir"), base)
    data = raw.get("data") or {}
    cfg.data_dir = _resolve_path(data.get("dir"), base) or str(base / "data")
    return cfg
