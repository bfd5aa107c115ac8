"""Plugin packages: a YAML schema plus a Python implementation file.

The schema is what the LLM sees (name, description, typed parameters and
returns); the implementation is what the execution worker loads. Schemas
are validated here, implementations are never imported or executed by the
registry — only the worker runs them.

On-disk layout: ``<plugins_dir>/<name>/plugin.yaml`` next to exactly one
``impl.*`` source file defining a callable named after the plugin.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .textutil import first_sentence, tokenize


class SchemaError(Exception):
    def __init__(self, path: str, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


class DuplicatePlugin(Exception):
    pass


@dataclass
class ParamSpec:
    name: str
    type: str
    required: bool
    description: str


@dataclass
class ReturnSpec:
    name: str
    type: str
    description: str


@dataclass
class PluginSchema:
    name: str
    description: str
    parameters: list[ParamSpec] = field(default_factory=list)
    returns: list[ReturnSpec] = field(default_factory=list)
    metadata: dict[str, Any] = field(default_factory=dict)  # carried opaquely


@dataclass
class PluginPackage:
    schema: PluginSchema
    impl_source: str

    @property
    def name(self) -> str:
        return self.schema.name


def _require(raw: dict, key: str, where: str) -> Any:
    if key not in raw or raw[key] in (None, ""):
        raise SchemaError(where, f"missing or empty key: {key}")
    return raw[key]


def parse_schema(yaml_text: str, source: str = "<string>") -> PluginSchema:
    try:
        raw = yaml.safe_load(yaml_text)
    except yaml.YAMLError as exc:
        raise SchemaError(source, f"invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise SchemaError(source, "schema must be a mapping")

    name = str(_require(raw, "name", source))
    description = str(_require(raw, "description", source)).strip()

    parameters: list[ParamSpec] = []
    seen: set[str] = set()
    for i, p in enumerate(raw.get("parameters") or []):
        where = f"{source}: parameters[{i}]"
        pname = str(_require(p, "name", where))
        if pname in seen:
            raise SchemaError(where, f"duplicate parameter name: {pname}")
        seen.add(pname)
        parameters.append(
            ParamSpec(
                name=pname,
                type=str(_require(p, "type", where)),
                required=bool(p.get("required", True)),
                description=str(_require(p, "description", where)).strip(),
            )
        )

    returns: list[ReturnSpec] = []
    for i, r in enumerate(raw.get("returns") or []):
        where = f"{source}: returns[{i}]"
        returns.append(
            ReturnSpec(
                name=str(_require(r, "name", where)),
                type=str(_require(r, "type", where)),
                description=str(_require(r, "description", where)).strip(),
            )
        )
    if not returns:
        raise SchemaError(source, "at least one return entry is required")

    metadata = raw.get("metadata") or {}
    if not isinstance(metadata, dict):
        raise SchemaError(source, "metadata must be a mapping")
    return PluginSchema(
        name=name,
        description=description,
        parameters=parameters,
        returns=returns,
        metadata=metadata,
    )


def schema_to_yaml(schema: PluginSchema) -> str:
    doc: dict[str, Any] = {
        "name": schema.name,
        "description": schema.description,
        "parameters": [
            {
                "name": p.name,
                "type": p.type,
                "required": p.required,
                "description": p.description,
            }
            for p in schema.parameters
        ],
        "returns": [
            {"name": r.name, "type": r.type, "description": r.description}
            for r in schema.returns
        ],
    }
    if schema.metadata:
        doc["metadata"] = schema.metadata
    return yaml.safe_dump(doc, sort_keys=False, allow_unicode=True)


def render_schema_for_prompt(schema: PluginSchema) -> str:
    """Deterministic signature block the code-generation prompt embeds."""
    params = ", ".join(f"{p.name}: {p.type}" for p in schema.parameters)
    rets = ", ".join(f"{r.name}: {r.type}" for r in schema.returns)
    lines = [f"{schema.name}({params}) -> ({rets})", schema.description]
    for p in schema.parameters:
        opt = "" if p.required else " (optional)"
        lines.append(f"  - {p.name}{opt}: {p.description}")
    for r in schema.returns:
        lines.append(f"  - returns {r.name}: {r.description}")
    return "\n".join(lines)


class PluginRegistry:
    """Immutable after load; enumeration is lexicographic by name."""

    def __init__(self, packages: list[PluginPackage] | None = None):
        self._packages: dict[str, PluginPackage] = {}
        for pkg in packages or []:
            if pkg.name in self._packages:
                raise DuplicatePlugin(pkg.name)
            self._packages[pkg.name] = pkg

    def __len__(self) -> int:
        return len(self._packages)

    def __contains__(self, name: str) -> bool:
        return name in self._packages

    def names(self) -> list[str]:
        return sorted(self._packages)

    def get(self, name: str) -> PluginPackage:
        return self._packages[name]

    def packages(self) -> list[PluginPackage]:
        return [self._packages[n] for n in self.names()]

    def schemas(self) -> list[PluginSchema]:
        return [p.schema for p in self.packages()]

    def subset(self, names: list[str]) -> "PluginRegistry":
        return PluginRegistry([self._packages[n] for n in names if n in self._packages])


def load_registry(directory: str | Path) -> tuple[PluginRegistry, list[SchemaError]]:
    """Load every plugin package under ``directory``.

    Schema problems are collected per package and returned alongside the
    registry so one broken plugin does not take the service down; duplicate
    names are a hard error.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"plugin directory not found: {directory}")
    packages: list[PluginPackage] = []
    errors: list[SchemaError] = []
    names: set[str] = set()
    for sub in sorted(p for p in directory.iterdir() if p.is_dir()):
        schema_path = sub / "plugin.yaml"
        if not schema_path.is_file():
            continue
        impls = sorted(p for p in sub.glob("impl.*") if p.is_file())
        try:
            schema = parse_schema(schema_path.read_text(), source=str(schema_path))
            if not impls:
                raise SchemaError(str(sub), "no impl.* implementation file")
            if len(impls) > 1:
                raise SchemaError(str(sub), f"expected one impl.* file, found {len(impls)}")
        except SchemaError as exc:
            errors.append(exc)
            continue
        if schema.name in names:
            raise DuplicatePlugin(schema.name)
        names.add(schema.name)
        packages.append(PluginPackage(schema=schema, impl_source=impls[0].read_text()))
    return PluginRegistry(packages), errors


def describe_for_planner(registry: PluginRegistry) -> str:
    """One line per plugin (name: first sentence), for the planner preamble."""
    if len(registry) == 0:
        return "No plugins are available."
    return "\n".join(
        f"- {s.name}: {first_sentence(s.description)}" for s in registry.schemas()
    )


def plugin_tokens(schema: PluginSchema) -> set[str]:
    return set(tokenize(f"{schema.name} {schema.description}"))
