"""Attribute-level F1 over labeled datasets, grouped by level of detail."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .planner import FailureRecord
from .schema import NGLDocument, NGLSchema, load_schema

FAILED = "<failed>"
ABSENT = "<absent>"


class ZeroSupport(ValueError):
    """No example carries a ground-truth label for the attribute."""


@dataclass(frozen=True)
class LabeledExample:
    id: str
    truth: NGLDocument
    prediction: NGLDocument | FailureRecord

    def predicted(self, attribute_id: str) -> str:
        # a failed or incomplete prediction is wrong for every labeled attribute
        if isinstance(self.prediction, FailureRecord):
            return FAILED
        return self.prediction.values.get(attribute_id, ABSENT)


def _pairs(examples: Sequence[LabeledExample], attribute_id: str) -> list[tuple[str, str]]:
    return [
        (ex.truth.values[attribute_id], ex.predicted(attribute_id))
        for ex in examples
        if attribute_id in ex.truth.values
    ]


def macro_f1(pairs: Sequence[tuple[str, str]]) -> float:
    """Macro F1 over the options present in ground truth, one-vs-rest per option."""
    if not pairs:
        raise ZeroSupport("no labeled examples")
    labels = sorted({t for t, _ in pairs})
    total = 0.0
    for option in labels:
        tp = sum(1 for t, p in pairs if t == option and p == option)
        fp = sum(1 for t, p in pairs if t != option and p == option)
        fn = sum(1 for t, p in pairs if t == option and p != option)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        total += 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return total / len(labels)


def attribute_f1(examples: Sequence[LabeledExample], attribute_id: str) -> float:
    pairs = _pairs(examples, attribute_id)
    if not pairs:
        raise ZeroSupport(f"no ground truth for {attribute_id}")
    return macro_f1(pairs)


def confusion_matrix(examples: Sequence[LabeledExample], attribute_id: str) -> dict[str, dict[str, int]]:
    """truth option -> predicted value -> count."""
    matrix: dict[str, dict[str, int]] = {}
    for t, p in _pairs(examples, attribute_id):
        row = matrix.setdefault(t, {})
        row[p] = row.get(p, 0) + 1
    return {t: dict(sorted(row.items())) for t, row in sorted(matrix.items())}


GROUPS = ("lod0", "lod1", "lod0&lod1")


@dataclass
class F1Report:
    per_attribute: dict[str, float] = field(default_factory=dict)
    support: dict[str, int] = field(default_factory=dict)
    zero_support: list[str] = field(default_factory=list)
    groups: dict[str, float | None] = field(default_factory=dict)
    confusion: dict[str, dict[str, dict[str, int]]] = field(default_factory=dict)
    n_examples: int = 0
    n_failed: int = 0

    @property
    def failure_rate(self) -> float | None:
        return self.n_failed / self.n_examples if self.n_examples else None

    def to_json(self) -> dict:
        return {
            "per_attribute": self.per_attribute,
            "support": self.support,
            "zero_support": self.zero_support,
            "groups": self.groups,
            "confusion": self.confusion,
            "n_examples": self.n_examples,
            "n_failed": self.n_failed,
            "failure_rate": self.failure_rate,
        }

    def to_text(self) -> str:
        lines = [f"{'attribute':<28} {'support':>7} {'F1':>7}"]
        for attr, f1 in self.per_attribute.items():
            lines.append(f"{attr:<28} {self.support[attr]:>7} {f1:>7.4f}")
        for attr in self.zero_support:
            lines.append(f"{attr:<28} {0:>7} {'n/a':>7}")
        lines.append("")
        for group, value in self.groups.items():
            shown = "n/a" if value is None else f"{value:.4f}"
            lines.append(f"macro F1 [{group}]: {shown}")
        rate = self.failure_rate
        lines.append(f"failed predictions: {self.n_failed}/{self.n_examples}"
                     + ("" if rate is None else f" ({rate:.2%})"))
        return "\n".join(lines) + "\n"


def lod_report(examples: Sequence[LabeledExample], schema: NGLSchema) -> F1Report:
    """Per-attribute F1 plus macro averages over the LOD-0, LOD-1 and shared groups.

    ``schema`` should be the LOD-1 schema so that both groups are defined;
    attributes without support are flagged and left out of every average.
    """
    report = F1Report(n_examples=len(examples),
                      n_failed=sum(isinstance(ex.prediction, FailureRecord) for ex in examples))
    for attr in schema.attributes:
        pairs = _pairs(examples, attr.id)
        if not pairs:
            report.zero_support.append(attr.id)
            continue
        report.per_attribute[attr.id] = macro_f1(pairs)
        report.support[attr.id] = len(pairs)
        report.confusion[attr.id] = confusion_matrix(examples, attr.id)
    members = {
        "lod0": [a.id for a in schema.attributes if a.lod == 0],
        "lod1": [a.id for a in schema.attributes],
    }
    # LOD-1 strictly contains LOD-0, so the shared subset is the LOD-0 set
    members["lod0&lod1"] = [a for a in members["lod0"] if a in members["lod1"]]
    for group in GROUPS:
        scores = [report.per_attribute[a] for a in members[group] if a in report.per_attribute]
        report.groups[group] = sum(scores) / len(scores) if scores else None
    return report


def load_examples(labels_dir: str | Path, predictions_dir: str | Path) -> list[LabeledExample]:
    """Pair ``<id>.json`` label and prediction files.

    A prediction file holding a FailureRecord (has a "stage" key) or missing
    entirely counts as a failed prediction.
    """
    labels_dir, predictions_dir = Path(labels_dir), Path(predictions_dir)
    examples = []
    for label_path in sorted(labels_dir.glob("*.json")):
        truth = NGLDocument.from_json(json.loads(label_path.read_text(encoding="utf-8")))
        pred_path = predictions_dir / label_path.name
        prediction: NGLDocument | FailureRecord
        if not pred_path.exists():
            prediction = FailureRecord("qa", "invalid-answer", None, "missing prediction")
        else:
            data = json.loads(pred_path.read_text(encoding="utf-8"))
            if isinstance(data, list):
                data = data[0] if data else {"stage": "qa", "reason": "invalid-answer"}
            if "stage" in data:
                prediction = FailureRecord(data["stage"], data["reason"], data.get("layer_index"),
                                           data.get("detail", ""))
            else:
                prediction = NGLDocument.from_json(data)
        examples.append(LabeledExample(label_path.stem, truth, prediction))
    return examples


def evaluate_dirs(labels_dir, predictions_dir, schema: NGLSchema | None = None) -> F1Report:
    return lod_report(load_examples(labels_dir, predictions_dir), schema or load_schema(lod=1))
