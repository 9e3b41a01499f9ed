"""NGL attribute catalog, documents and validation.

An NGL schema is an ordered list of discrete garment attributes. Each
attribute has a small set of natural-language options, a level of detail
(0 = reconstruction-essential, 1 = stylistic detail) and a conjunction of
positive dependency predicates that decide when the attribute applies.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from importlib import resources
from pathlib import Path
from typing import Mapping

OPTION_RE = re.compile(r"^[a-z0-9\- ]+$")

ISSUE_KINDS = (
    "missing-required",
    "unknown-attribute",
    "invalid-option",
    "inapplicable",
    "dependency-unresolved",
)


class SchemaError(ValueError):
    """Raised when a schema file is malformed or violates an invariant."""


@dataclass(frozen=True)
class AttributeDef:
    id: str
    question: str
    options: tuple[str, ...]
    lod: int
    depends_on: tuple[tuple[str, frozenset[str]], ...] = ()

    def is_applicable(self, values: Mapping[str, str]) -> bool:
        return all(values.get(dep) in allowed for dep, allowed in self.depends_on)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "question": self.question,
            "options": list(self.options),
            "lod": self.lod,
            "depends_on": {
                dep: sorted(allowed) for dep, allowed in self.depends_on
            },
        }


@dataclass(frozen=True)
class NGLSchema:
    attributes: tuple[AttributeDef, ...]
    version: str
    lod: int = 1

    def __post_init__(self):
        object.__setattr__(self, "_index", {a.id: a for a in self.attributes})

    def __len__(self) -> int:
        return len(self.attributes)

    def __contains__(self, attribute_id: str) -> bool:
        return attribute_id in self._index

    def __getitem__(self, attribute_id: str) -> AttributeDef:
        return self._index[attribute_id]

    @property
    def ids(self) -> list[str]:
        return [a.id for a in self.attributes]

    def options(self, attribute_id: str) -> tuple[str, ...]:
        return self._index[attribute_id].options

    def to_json(self) -> dict:
        return {
            "version": self.version,
            "lod": self.lod,
            "attributes": [a.to_json() for a in self.attributes],
        }


@dataclass(frozen=True)
class NGLDocument:
    """One garment layer described as attribute -> option pairs."""

    schema_version: str
    values: dict[str, str] = field(default_factory=dict)
    layer_index: int = 0

    def __post_init__(self):
        if self.layer_index < 0:
            raise ValueError(f"layer_index must be >= 0, got {self.layer_index}")
        object.__setattr__(self, "values", dict(self.values))

    def to_json(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "layer_index": self.layer_index,
            "values": dict(self.values),
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "NGLDocument":
        return cls(
            schema_version=data.get("schema_version", ""),
            values=dict(data.get("values", {})),
            layer_index=int(data.get("layer_index", 0)),
        )


@dataclass(frozen=True)
class Issue:
    attribute_id: str
    kind: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[Issue, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.issues

    def kinds(self, attribute_id: str) -> set[str]:
        return {i.kind for i in self.issues if i.attribute_id == attribute_id}

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "issues": [
                {"attribute": i.attribute_id, "kind": i.kind, "message": i.message}
                for i in self.issues
            ],
        }


def default_schema_path() -> Path:
    return Path(str(resources.files("nglprompter") / "data" / "ngl_schema.json"))


def _parse_attribute(raw: Mapping) -> AttributeDef:
    try:
        attr_id = raw["id"]
        options = tuple(raw["options"])
        lod = int(raw["lod"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed attribute entry {raw!r}: {exc}") from exc
    if lod not in (0, 1):
        raise SchemaError(f"{attr_id}: lod must be 0 or 1, got {lod}")
    if len(options) < 2:
        raise SchemaError(f"{attr_id}: needs at least two options")
    if len(set(options)) != len(options):
        raise SchemaError(f"{attr_id}: duplicate options {options}")
    for opt in options:
        if not isinstance(opt, str) or not OPTION_RE.match(opt):
            raise SchemaError(f"{attr_id}: invalid option string {opt!r}")
    deps = raw.get("depends_on") or {}
    depends_on = tuple(
        (dep, frozenset(allowed)) for dep, allowed in deps.items()
    )
    return AttributeDef(
        id=attr_id,
        question=raw.get("question", attr_id.replace("_", " ") + "?"),
        options=options,
        lod=lod,
        depends_on=depends_on,
    )


def _check_dependencies(attrs: list[AttributeDef]) -> None:
    by_id = {a.id: a for a in attrs}
    graph = {}
    for a in attrs:
        for dep, allowed in a.depends_on:
            if dep == a.id:
                raise SchemaError(f"dependency cycle: {a.id} depends on itself")
            if dep not in by_id:
                raise SchemaError(f"{a.id} depends on unknown attribute {dep}")
            if by_id[dep].lod > a.lod:
                raise SchemaError(
                    f"{a.id} (lod {a.lod}) depends on {dep} (lod {by_id[dep].lod})"
                )
            unknown = allowed - set(by_id[dep].options)
            if unknown or not allowed:
                raise SchemaError(
                    f"{a.id} requires values {sorted(unknown) or '[]'} not among {dep} options"
                )
        graph[a.id] = {dep for dep, _ in a.depends_on}
    try:
        tuple(TopologicalSorter(graph).static_order())
    except CycleError as exc:
        raise SchemaError(f"dependency cycle: {exc.args[1]}") from exc


def parse_schema(data: Mapping, lod: int = 1) -> NGLSchema:
    if lod not in (0, 1):
        raise SchemaError(f"lod must be 0 or 1, got {lod}")
    try:
        raw_attrs = data["attributes"]
        version = str(data["version"])
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"schema document lacks {exc}") from exc
    attrs = [_parse_attribute(r) for r in raw_attrs]
    seen = set()
    for a in attrs:
        if a.id in seen:
            raise SchemaError(f"duplicate attribute id {a.id}")
        seen.add(a.id)
    _check_dependencies(attrs)

    n0 = sum(a.lod == 0 for a in attrs)
    if "lod0_count" in data and n0 != data["lod0_count"]:
        raise SchemaError(f"header declares {data['lod0_count']} lod-0 attributes, found {n0}")
    if "lod1_count" in data and len(attrs) != data["lod1_count"]:
        raise SchemaError(f"header declares {data['lod1_count']} lod-1 attributes, found {len(attrs)}")

    return NGLSchema(tuple(a for a in attrs if a.lod <= lod), version, lod)


def load_schema(source: str | Path | Mapping | None = None, lod: int = 1) -> NGLSchema:
    """Load a schema from a path, a JSON string or an already-parsed mapping.

    ``None`` loads the default schema shipped with the package.
    """
    if source is None:
        source = default_schema_path()
    if isinstance(source, Mapping):
        return parse_schema(source, lod)
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"cannot parse schema: {exc}") from exc
    return parse_schema(data, lod)


def _values(doc: NGLDocument | Mapping[str, str]) -> Mapping[str, str]:
    return doc.values if isinstance(doc, NGLDocument) else doc


def applicable_attributes(schema: NGLSchema, partial: NGLDocument | Mapping[str, str]) -> list[str]:
    """Unassigned attributes whose dependencies hold, in schema order."""
    values = _values(partial)
    return [
        a.id for a in schema.attributes
        if a.id not in values and a.is_applicable(values)
    ]


def validate_document(
    schema: NGLSchema,
    doc: NGLDocument | Mapping[str, str],
    partial: bool = False,
) -> ValidationReport:
    """Check options, applicability and (unless ``partial``) completeness."""
    values = _values(doc)
    issues = []
    for key, value in values.items():
        if key not in schema:
            issues.append(Issue(key, "unknown-attribute", f"{key} is not in schema {schema.version}"))
            continue
        attr = schema[key]
        if value not in attr.options:
            issues.append(Issue(
                key, "invalid-option",
                f"{value!r} is not one of {' | '.join(attr.options)}",
            ))
        for dep, allowed in attr.depends_on:
            if dep not in values:
                issues.append(Issue(key, "dependency-unresolved", f"{key} requires {dep} to be set"))
            elif values[dep] not in allowed:
                issues.append(Issue(
                    key, "inapplicable",
                    f"{key} applies only when {dep} in {sorted(allowed)}, got {values[dep]!r}",
                ))
    if not partial:
        for attr_id in applicable_attributes(schema, values):
            issues.append(Issue(attr_id, "missing-required", f"{attr_id} applies but is not set"))
    return ValidationReport(tuple(issues))


def load_document(path: str | Path) -> NGLDocument:
    return NGLDocument.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
