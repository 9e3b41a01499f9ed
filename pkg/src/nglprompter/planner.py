"""Dependency-aware sequential question planner."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Mapping

from .schema import NGLDocument, NGLSchema, applicable_attributes, validate_document

FAILURE_STAGES = ("layer-id", "qa", "compile", "pattern")
FAILURE_REASONS = ("refusal", "invalid-answer", "transport-error")


class Refusal(Exception):
    """Raised by an answer source when the model declines to answer."""


class TransportError(Exception):
    """Raised by an answer source when the model could not be reached."""


class PlannerError(ValueError):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


@dataclass(frozen=True)
class FailureRecord:
    stage: str
    reason: str
    layer_index: int | None = None
    detail: str = ""
    values: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.stage not in FAILURE_STAGES:
            raise ValueError(f"unknown failure stage {self.stage!r}")
        if self.reason not in FAILURE_REASONS:
            raise ValueError(f"unknown failure reason {self.reason!r}")

    def to_json(self) -> dict:
        return {
            "stage": self.stage,
            "reason": self.reason,
            "layer_index": self.layer_index,
            "detail": self.detail,
            "values": dict(self.values),
        }


@dataclass(frozen=True)
class Question:
    attribute_id: str
    prompt_text: str
    options: tuple[str, ...]


def render_prompt(schema: NGLSchema, attribute_id: str, values: Mapping[str, str]) -> str:
    attr = schema[attribute_id]
    category = values.get("garment_category", "garment")
    lines = [f"For the {category} in the image, {attr.question[0].lower()}{attr.question[1:]}"]
    known = [(k, v) for k, v in values.items() if k != "garment_category"]
    if known:
        lines.append("Known so far: " + ", ".join(f"{k} = {v}" for k, v in known) + ".")
    lines.append("Answer with exactly one of: " + " | ".join(attr.options))
    return "\n".join(lines)


@dataclass
class PlannerState:
    schema: NGLSchema
    values: dict[str, str] = field(default_factory=dict)
    layer_index: int = 0
    asked: list[str] = field(default_factory=list)
    pending: str | None = None
    transcript: list[dict] = field(default_factory=list)

    def __post_init__(self):
        report = validate_document(self.schema, self.values, partial=True)
        if not report.ok:
            raise PlannerError(report.issues[0].kind, report.issues[0].message)

    @property
    def document(self) -> NGLDocument:
        return NGLDocument(self.schema.version, dict(self.values), self.layer_index)


def next_question(state: PlannerState) -> Question | None:
    """Next unassigned applicable attribute in schema order, or None when done."""
    for attr_id in applicable_attributes(state.schema, state.values):
        if attr_id in state.asked:
            continue
        state.pending = attr_id
        return Question(
            attr_id,
            render_prompt(state.schema, attr_id, state.values),
            state.schema.options(attr_id),
        )
    state.pending = None
    return None


def record_answer(state: PlannerState, attribute_id: str, option: str) -> PlannerState:
    if attribute_id != state.pending:
        raise PlannerError(
            "unasked-attribute",
            f"answer for {attribute_id!r} but the pending question is {state.pending!r}",
        )
    options = state.schema.options(attribute_id)
    if option not in options:
        raise PlannerError(
            "invalid-option",
            f"{option!r} is not one of {' | '.join(options)} for {attribute_id}",
        )
    state.values[attribute_id] = option
    state.asked.append(attribute_id)
    state.pending = None
    return state


AnswerSource = Callable[[Question], str]


def run_session(
    schema: NGLSchema,
    answer_source: AnswerSource,
    layer_index: int = 0,
    seed: Mapping[str, str] | None = None,
    transcript: list[dict] | None = None,
) -> NGLDocument | FailureRecord:
    """Ask questions until nothing applicable is left.

    ``seed`` pre-assigns values (e.g. the category found during layer
    identification). Refusals and transport errors from ``answer_source``
    end the session with a FailureRecord holding the values gathered so far;
    an out-of-set answer raises PlannerError.
    """
    state = PlannerState(schema, dict(seed or {}), layer_index)
    if transcript is not None:
        state.transcript = transcript
    while (question := next_question(state)) is not None:
        try:
            answer = answer_source(question)
        except Refusal as exc:
            return FailureRecord("qa", "refusal", layer_index, str(exc) or question.attribute_id,
                                 dict(state.values))
        except TransportError as exc:
            return FailureRecord("qa", "transport-error", layer_index, str(exc), dict(state.values))
        state.transcript.append({
            "attribute": question.attribute_id,
            "question": question.prompt_text,
            "answer": answer,
            "timestamp": time.time(),
        })
        record_answer(state, question.attribute_id, answer)
    return state.document
