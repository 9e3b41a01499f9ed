"""Deterministic lowering of NGL documents to GarmentCode-style design parameters.

The output mirrors GarmentCode's design files: a ``meta`` block choosing the
upper/bottom components and a ``design`` block with one section per component,
each leaf stored as ``{"v": value}``. Which sections exist follows from
``meta``; every leaf of an active section is filled (defaults first, then the
rules of the assigned NGL options in schema order).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .schema import NGLDocument, NGLSchema, validate_document

SCALAR = "$scalar"
SKIRT_FAMILY = ("pencil", "straight", "a-line", "flared", "circle", "levels", "pants")


class CompileError(ValueError):
    pass


@dataclass(frozen=True)
class MappingTable:
    version: str
    tree: dict
    defaults: dict
    category_defaults: dict
    upper_tags: dict
    upper_sections: tuple[str, ...]
    bottom_sections: dict
    lengths: dict
    scalars: dict
    ordinal: tuple[str, ...]
    rules: dict

    @classmethod
    def from_json(cls, data: Mapping) -> "MappingTable":
        return cls(
            version=data["version"],
            tree=data["tree"],
            defaults=data["defaults"],
            category_defaults=data.get("category_defaults", {}),
            upper_tags=data["upper_tags"],
            upper_sections=tuple(data["upper_sections"]),
            bottom_sections=data["bottom_sections"],
            lengths=data["lengths"],
            scalars=data["scalars"],
            ordinal=tuple(data.get("ordinal", ())),
            rules=data["rules"],
        )

    def leaf(self, section: str, name: str) -> dict | None:
        return self.tree.get(section, {}).get(name)

    def check(self, schema: NGLSchema) -> list[str]:
        """Problems with this table relative to ``schema``; empty when usable."""
        problems = []
        bottom = set(self.bottom_sections.values())
        for attr in schema.attributes:
            entries = self.rules.get(attr.id)
            if entries is None:
                problems.append(f"no rules for attribute {attr.id}")
                continue
            for option in attr.options:
                if option not in entries:
                    problems.append(f"no rule entry for {attr.id}={option}")
                    continue
                for write in entries[option]:
                    path, value = write[0], write[1]
                    section, name = path.split(".", 1)
                    if section == "@bottom":
                        targets = [s for s in bottom if self.leaf(s, name)]
                    elif section == "@upper":
                        targets = [s for s in self.upper_sections if self.leaf(s, name)]
                    else:
                        targets = [section] if self.leaf(section, name) else []
                    if not targets:
                        problems.append(f"{attr.id}={option} writes undeclared path {path}")
                    if value == SCALAR and option not in self.scalars.get(attr.id, {}):
                        problems.append(f"{attr.id}={option} uses a missing scalar")
        for section, leaves in self.tree.items():
            for name, spec in leaves.items():
                if not spec.get("optional") and name not in self.defaults.get(section, {}):
                    problems.append(f"no default for {section}.{name}")
        return problems


def default_mapping_path() -> Path:
    return Path(str(resources.files("nglprompter") / "data" / "garmentcode_mapping.json"))


def load_mapping(source: str | Path | Mapping | None = None) -> MappingTable:
    if source is None:
        source = default_mapping_path()
    if isinstance(source, Mapping):
        return MappingTable.from_json(source)
    return MappingTable.from_json(json.loads(Path(source).read_text(encoding="utf-8")))


def discretize_inverse(attribute: str, option: str, table: MappingTable | None = None) -> float:
    """Canonical scalar behind a discretized NGL option."""
    table = table or load_mapping()
    try:
        return float(table.scalars[attribute][option])
    except KeyError:
        raise ValueError(f"{attribute}={option} is not a numeric-mapped option") from None


def resolve_bottom_component(doc: NGLDocument | Mapping[str, str]) -> str | None:
    values = doc.values if isinstance(doc, NGLDocument) else doc
    category = values.get("garment_category")
    if category in ("pants", "jumpsuit"):
        return "pants"
    if category not in ("skirt", "dress"):
        return None
    silhouette = values.get("skirt_silhouette")
    if values.get("skirt_tiered") == "yes":
        return "levels"
    if silhouette == "circle":
        return "circle"
    if silhouette == "pencil":
        return "pencil"
    if silhouette in ("a-line", "flared") and values.get("skirt_volume") == "high":
        return "flared"
    if silhouette == "flared":
        return "flared"
    if silhouette == "a-line":
        return "a-line"
    return "straight"


def _base_component(values: Mapping[str, str]) -> str:
    untiered = dict(values, skirt_tiered="no")
    return resolve_bottom_component(untiered)


def _check_leaf(section: str, name: str, value: Any, spec: dict) -> None:
    kind = spec["type"]
    ok = True
    if kind == "float":
        ok = isinstance(value, (int, float)) and not isinstance(value, bool) \
            and spec["min"] <= value <= spec["max"]
    elif kind == "int":
        ok = isinstance(value, int) and not isinstance(value, bool) \
            and spec["min"] <= value <= spec["max"]
    elif kind == "bool":
        ok = isinstance(value, bool)
    elif kind == "enum":
        ok = value in spec["values"]
    if not ok:
        raise CompileError(f"{section}.{name} = {value!r} violates {spec}")


def compile_document(
    doc: NGLDocument,
    schema: NGLSchema,
    table: MappingTable | None = None,
) -> dict:
    """Lower a complete, valid NGL document to a GarmentCode parameter document."""
    table = table or load_mapping()
    report = validate_document(schema, doc)
    if not report.ok:
        raise CompileError(f"invalid NGL document: {report.issues[0].message}")
    values = doc.values
    category = values["garment_category"]

    upper = None
    if category in ("top", "dress", "jumpsuit"):
        upper = table.upper_tags[values.get("bodice_fit", "loose")]
    bottom = resolve_bottom_component(values)
    waistband = values.get("has_waistband") == "yes"

    sections = list(table.upper_sections) if upper else []
    bottom_section = None
    if bottom == "levels":
        bottom_section = table.bottom_sections[_base_component(values)]
        sections += [table.bottom_sections["levels"], bottom_section]
    elif bottom:
        bottom_section = table.bottom_sections[bottom]
        sections.append(bottom_section)
    if waistband:
        sections.append("waistband")

    design = {
        s: {k: v for k, v in table.defaults[s].items()} for s in sections
    }
    for s, leaves in table.category_defaults.get(category, {}).items():
        if s in design:
            design[s].update(leaves)
    if bottom == "levels":
        design["levels-skirt"]["base"] = _base_component(values)

    def targets(path: str) -> list[tuple[str, str]]:
        section, name = path.split(".", 1)
        if section == "@upper":
            section = "shirt" if upper else None
        elif section == "@bottom":
            section = bottom_section
        if section is None or table.leaf(section, name) is None:
            # placeholder writes only land on sections that declare the leaf
            if path.startswith("@"):
                return []
            raise CompileError(f"rule writes undeclared path {path}")
        if section not in design:
            raise CompileError(f"rule writes {path} but section {section} is inactive")
        return [(section, name)]

    for attr in schema.attributes:
        if attr.id not in values:
            continue
        option = values[attr.id]
        for write in table.rules[attr.id][option]:
            path, value = write[0], write[1]
            op = write[2] if len(write) > 2 else "set"
            if value == SCALAR:
                value = table.scalars[attr.id][option]
            for section, name in targets(path):
                if op == "mul":
                    spec = table.leaf(section, name)
                    value_out = design[section][name] * value
                    design[section][name] = min(max(value_out, spec["min"]), spec["max"])
                else:
                    design[section][name] = value

    if category == "dress":
        extent = table.lengths["dress_bodice_extent"][values["dress_waist_seam"]]
        hem = table.scalars["skirt_length"][values["skirt_length"]]
        design["shirt"]["waist_drop"] = extent
        design[bottom_section]["length"] = max(table.lengths["min_skirt_part"], hem - extent)
    if upper and design["shirt"]["one_shoulder"]:
        design["sleeve"]["count"] = min(design["sleeve"]["count"], 1)

    for section, leaves in design.items():
        for name, value in leaves.items():
            spec = table.leaf(section, name)
            if spec is None:
                raise CompileError(f"{section}.{name} is not in the parameter tree")
            _check_leaf(section, name, value, spec)

    return {
        "meta": {
            "upper": {"v": upper},
            "bottom": {"v": bottom},
            "waistband": {"v": waistband},
            "duplicate_layers": {"v": None},
        },
        "design": {
            s: {name: {"v": design[s][name]} for name in sorted(design[s])}
            for s in sorted(design)
        },
    }


def active_sections(params: Mapping) -> set[str]:
    return set(params["design"])


def leaf_value(params: Mapping, section: str, name: str, default: Any = None) -> Any:
    try:
        return params["design"][section][name]["v"]
    except KeyError:
        return default
