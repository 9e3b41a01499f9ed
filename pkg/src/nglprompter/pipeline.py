"""Outfit-level orchestration: layer identification, per-layer QA, compile, pattern."""

from __future__ import annotations

import base64
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import httpx

from .compiler import MappingTable, compile_document, load_mapping
from .decoder import ToyBPETokenizer, Tokenizer, build_trie, constrained_argmax_decode, match_free_text
from .patterngen import BodyMeasurements, PatternDocument, generate_pattern, merge_patterns, render_svg
from .planner import FailureRecord, Question, Refusal, TransportError, run_session
from .schema import NGLDocument, NGLSchema
from .serialize import canonical_json

log = logging.getLogger(__name__)

# Coarse garment names a model may use for a layer, keyed by garment_category option.
CATEGORY_ALIASES = {
    "top": ["shirt", "t-shirt", "tee", "blouse", "sweater", "jumper", "hoodie", "cardigan",
            "jacket", "blazer", "coat", "vest", "tank", "tank top", "crop top", "bodysuit", "camisole"],
    "dress": ["gown", "sundress", "frock"],
    "skirt": ["miniskirt", "maxi skirt", "midi skirt"],
    "pants": ["trousers", "jeans", "shorts", "leggings", "slacks", "chinos", "joggers"],
    "jumpsuit": ["overalls", "romper", "playsuit", "dungarees", "boilersuit"],
}

LAYER_PROMPT = (
    "List every visible garment layer of the outfit, ordered from the innermost to the "
    "outermost layer, one garment per line. Use one of: {options}."
)


@dataclass(frozen=True)
class Media:
    kind: str                       # "image" or "text"
    text: str = ""
    path: str | None = None

    @classmethod
    def from_text(cls, text: str) -> "Media":
        return cls("text", text=text)

    @classmethod
    def from_image(cls, path: str | Path) -> "Media":
        return cls("image", path=str(path))

    def image_bytes(self) -> bytes:
        if self.kind != "image" or self.path is None:
            raise TransportError("media is not an image")
        try:
            return Path(self.path).read_bytes()
        except OSError as exc:
            raise TransportError(f"cannot read image {self.path}: {exc}") from exc


@dataclass(frozen=True)
class LayerDescriptor:
    index: int
    category: str


class InvalidAnswer(Exception):
    pass


class ModelBackend(Protocol):
    has_logit_access: bool
    accepts_images: bool

    def list_layers(self, media: Media) -> str | list[str]: ...

    def answer(self, question: Question, media: Media, layer: LayerDescriptor) -> str: ...


class LogitBackend(ModelBackend, Protocol):
    tokenizer: Tokenizer

    def next_token_scores(self, question: Question, media: Media, layer: LayerDescriptor,
                          emitted: list[int]) -> Sequence[float]: ...


# -- layer identification -----------------------------------------------------

_SPLIT = re.compile(r"\s*(?:\n|,|;|\bover\b|\bunder\b|\bwith\b|\band\b)\s*")


def parse_layer_text(text: str, categories: Sequence[str]) -> list[str]:
    """Free-text layer list -> categories, innermost first.

    "A over B" lists outer garments first, so such lists are reversed.
    """
    clauses = [c for c in _SPLIT.split(text.strip().lower()) if c and c not in ("over", "under", "with", "and")]
    found = []
    for clause in clauses:
        clause = re.sub(r"^\s*(?:\d+[.)]|[-*])\s*", "", clause)
        m = match_free_text(clause, categories, CATEGORY_ALIASES)
        if isinstance(m, str):
            found.append(m)
    if re.search(r"\bover\b", text.lower()):
        found.reverse()
    return found


def identify_layers(backend: ModelBackend, media: Media, schema: NGLSchema) -> list[LayerDescriptor] | FailureRecord:
    categories = schema.options("garment_category")
    if media.kind == "image" and not backend.accepts_images:
        return FailureRecord("layer-id", "invalid-answer", None, "backend does not accept images")
    if media.kind == "image" and not (media.path and os.access(media.path, os.R_OK)):
        return FailureRecord("layer-id", "transport-error", None, f"cannot read image {media.path}")
    try:
        raw = backend.list_layers(media)
    except Refusal as exc:
        return FailureRecord("layer-id", "refusal", None, str(exc))
    except TransportError as exc:
        return FailureRecord("layer-id", "transport-error", None, str(exc))
    if isinstance(raw, str):
        names = parse_layer_text(raw, categories)
    else:
        names = []
        for label in raw:
            m = match_free_text(label, categories, CATEGORY_ALIASES)
            if isinstance(m, str):
                names.append(m)
            else:
                return FailureRecord("layer-id", "invalid-answer", None, f"unknown garment {label!r}")
    if not names:
        return FailureRecord("layer-id", "invalid-answer", None, f"no garment layers in {raw!r}")
    return [LayerDescriptor(i, c) for i, c in enumerate(names)]


# -- per-layer QA ---------------------------------------------------------------

def make_answer_source(backend: ModelBackend, media: Media, layer: LayerDescriptor,
                       tokenizer_cache: dict | None = None) -> Callable[[Question], str]:
    """Answer callback for the planner: masked decoding or free-text matching with one re-ask."""
    if backend.has_logit_access:
        tokenizer = backend.tokenizer
        tries = tokenizer_cache if tokenizer_cache is not None else {}

        def decode(question: Question) -> str:
            trie = tries.get(question.options)
            if trie is None:
                trie = tries[question.options] = build_trie(question.options, tokenizer)
            return constrained_argmax_decode(
                lambda emitted: backend.next_token_scores(question, media, layer, emitted), trie)
        return decode

    def ask(question: Question) -> str:
        raw = backend.answer(question, media, layer)
        m = match_free_text(raw, question.options)
        if isinstance(m, str):
            return m
        retry = Question(
            question.attribute_id,
            question.prompt_text + f"\nYour previous answer {raw!r} was not one of the options. "
            "Reply with one option only.",
            question.options,
        )
        raw = backend.answer(retry, media, layer)
        m = match_free_text(raw, question.options)
        if isinstance(m, str):
            return m
        raise InvalidAnswer(f"{question.attribute_id}: {raw!r} matches no option")
    return ask


@dataclass
class LayerResult:
    layer: LayerDescriptor
    ngl: NGLDocument
    garmentcode: dict
    pattern: PatternDocument


@dataclass
class OutfitResult:
    layers: list[LayerResult] = field(default_factory=list)
    failures: list[FailureRecord] = field(default_factory=list)
    transcripts: dict[int, list[dict]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures


def _process_layer(backend, media, layer, schema, table, body):
    transcript: list[dict] = []
    answer = make_answer_source(backend, media, layer)
    try:
        doc = run_session(schema, answer, layer.index, {"garment_category": layer.category}, transcript)
    except InvalidAnswer as exc:
        return None, FailureRecord("qa", "invalid-answer", layer.index, str(exc)), transcript
    except (ValueError, KeyError) as exc:
        return None, FailureRecord("qa", "invalid-answer", layer.index, str(exc)), transcript
    if isinstance(doc, FailureRecord):
        return None, doc, transcript
    try:
        params = compile_document(doc, schema, table)
    except Exception as exc:  # compile is total on valid input; anything here is a defect
        log.exception("compile failed for layer %d", layer.index)
        return None, FailureRecord("compile", "invalid-answer", layer.index, str(exc), doc.values), transcript
    try:
        pattern = generate_pattern(params, body)
    except Exception as exc:
        log.exception("pattern generation failed for layer %d", layer.index)
        return None, FailureRecord("pattern", "invalid-answer", layer.index, str(exc), doc.values), transcript
    return LayerResult(layer, doc, params, pattern), None, transcript


def process_outfit(
    backend: ModelBackend,
    media: Media,
    schema: NGLSchema,
    table: MappingTable | None = None,
    body: BodyMeasurements | None = None,
    jobs: int = 1,
) -> OutfitResult:
    """Run every garment layer through its own planner session.

    Layers are independent: a failure in one never touches the others.
    """
    table = table or load_mapping()
    body = body or BodyMeasurements()
    result = OutfitResult()
    layers = identify_layers(backend, media, schema)
    if isinstance(layers, FailureRecord):
        result.failures.append(layers)
        return result
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        outcomes = list(pool.map(
            lambda layer: _process_layer(backend, media, layer, schema, table, body), layers))
    for layer, (done, failure, transcript) in zip(layers, outcomes):
        result.transcripts[layer.index] = transcript
        if done is not None:
            result.layers.append(done)
        if failure is not None:
            result.failures.append(failure)
    return result


def failure_rate(results: Sequence[OutfitResult]) -> float:
    if not results:
        raise ValueError("failure rate of an empty result set is undefined")
    return sum(1 for r in results if r.failures) / len(results)


# -- backends -------------------------------------------------------------------

class OracleBackend:
    """Replays ground-truth NGL labels, one document per layer (innermost first)."""

    accepts_images = True

    def __init__(self, labels: Sequence[NGLDocument], layer_names: Sequence[str] | None = None,
                 logits: bool = False, tokenizer: Tokenizer | None = None):
        self.labels = list(labels)
        self.layer_names = list(layer_names) if layer_names is not None else None
        self.has_logit_access = logits
        self.tokenizer = tokenizer or ToyBPETokenizer()

    def list_layers(self, media: Media) -> list[str]:
        if self.layer_names is not None:
            return list(self.layer_names)
        return [doc.values["garment_category"] for doc in self.labels]

    def answer(self, question: Question, media: Media, layer: LayerDescriptor) -> str:
        # unlabeled attributes get a non-answer, which the pipeline records as invalid
        return self.labels[layer.index].values.get(question.attribute_id, "no label")

    def next_token_scores(self, question, media, layer, emitted):
        scores = [0.0] * self.tokenizer.vocab_size
        label = self.labels[layer.index].values.get(question.attribute_id)
        if label is None:
            return scores
        target = self.tokenizer.encode(label) + [self.tokenizer.eos_id]
        if len(emitted) < len(target):
            scores[target[len(emitted)]] = 10.0
        return scores


class FaultInjectingBackend:
    """Wraps a backend and refuses (or errors) on chosen stages/layers/attributes."""

    def __init__(self, inner, refuse_layers: bool = False, refuse_layer_index: int | None = None,
                 refuse_attribute: str | None = None, transport_error: bool = False,
                 garble_layer_index: int | None = None):
        self.inner = inner
        self.refuse_layers = refuse_layers
        self.refuse_layer_index = refuse_layer_index
        self.refuse_attribute = refuse_attribute
        self.transport_error = transport_error
        self.garble_layer_index = garble_layer_index
        self.has_logit_access = getattr(inner, "has_logit_access", False)
        self.accepts_images = inner.accepts_images
        self.tokenizer = getattr(inner, "tokenizer", None)

    def _fail(self, detail: str):
        if self.transport_error:
            raise TransportError(detail)
        raise Refusal(detail)

    def list_layers(self, media):
        if self.refuse_layers:
            self._fail("I can't help with identifying people in images.")
        return self.inner.list_layers(media)

    def _check(self, question, layer):
        hit_layer = self.refuse_layer_index is not None and layer.index == self.refuse_layer_index
        hit_attr = self.refuse_attribute is not None and question.attribute_id == self.refuse_attribute
        if hit_layer or hit_attr:
            self._fail(f"refused {question.attribute_id} on layer {layer.index}")

    def answer(self, question, media, layer):
        self._check(question, layer)
        if self.garble_layer_index == layer.index:
            return "I am not sure what you mean"
        return self.inner.answer(question, media, layer)

    def next_token_scores(self, question, media, layer, emitted):
        self._check(question, layer)
        return self.inner.next_token_scores(question, media, layer, emitted)


class KeywordTextBackend:
    """Answers from a text description by keyword matching.

    When the text is silent the answer is the configured default, else "no"
    or "none" when offered (unmentioned features are assumed absent), else
    the first option.
    """

    has_logit_access = False
    accepts_images = False

    def __init__(self, defaults: Mapping[str, str] | None = None):
        self.defaults = dict(defaults or {})

    def list_layers(self, media: Media) -> str:
        return media.text

    def answer(self, question: Question, media: Media, layer: LayerDescriptor) -> str:
        m = match_free_text(media.text, question.options)
        if isinstance(m, str):
            return m
        if question.attribute_id in self.defaults:
            return self.defaults[question.attribute_id]
        for absent in ("no", "none"):
            if absent in question.options:
                return absent
        return question.options[0]


class InteractiveBackend:
    """Asks a person on the terminal; re-prompts until the typed answer matches an option."""

    has_logit_access = False
    accepts_images = True

    def __init__(self, input_fn: Callable[[str], str] = input, output_fn: Callable[[str], None] = print):
        self.input_fn = input_fn
        self.output_fn = output_fn

    def list_layers(self, media: Media) -> str:
        if media.kind == "image":
            self.output_fn(f"Image: {media.path}")
        else:
            self.output_fn(f"Description: {media.text}")
        return self.input_fn("Garment layers, innermost first, comma separated: ")

    def answer(self, question: Question, media: Media, layer: LayerDescriptor) -> str:
        while True:
            self.output_fn(f"[layer {layer.index}] {question.prompt_text}")
            typed = self.input_fn("> ")
            m = match_free_text(typed, question.options)
            if isinstance(m, str):
                return m
            self.output_fn(f"Please answer with one of: {' | '.join(question.options)}")


DEFAULT_REFUSAL_PATTERNS = (
    r"\bI(?:'m| am) sorry\b",
    r"\bI can(?:'t|not) (?:help|assist|comply|process)\b",
    r"\bI(?:'m| am) (?:unable|not able) to\b",
    r"\bI won't\b",
    r"\bcannot (?:help|assist) with\b",
)


@dataclass
class HttpBackendConfig:
    endpoint: str
    model: str
    api_key: str | None = None
    timeout: float = 60.0
    max_retries: int = 3
    backoff: float = 1.0
    max_in_flight: int = 4
    temperature: float = 0.0
    refusal_patterns: tuple[str, ...] = DEFAULT_REFUSAL_PATTERNS

    @classmethod
    def from_env(cls, endpoint: str | None = None, model: str | None = None, **kwargs) -> "HttpBackendConfig":
        return cls(
            endpoint=endpoint or os.environ.get("NGL_ENDPOINT", "http://localhost:8000/v1"),
            model=model or os.environ.get("NGL_MODEL", "default"),
            api_key=os.environ.get("NGL_API_KEY"),
            **kwargs,
        )


class HttpChatBackend:
    """Chat-completions client (OpenAI-compatible JSON). No logit access."""

    has_logit_access = False
    accepts_images = True

    def __init__(self, config: HttpBackendConfig, client: httpx.Client | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        headers = {"Authorization": f"Bearer {config.api_key}"} if config.api_key else {}
        self.client = client or httpx.Client(timeout=config.timeout, headers=headers)
        if client is not None and config.api_key:
            self.client.headers.update(headers)
        self._slots = threading.Semaphore(config.max_in_flight)
        self._refusal = [re.compile(p, re.IGNORECASE) for p in config.refusal_patterns]
        self._sleep = sleep

    def _content(self, text: str, media: Media) -> list[dict] | str:
        if media.kind == "text":
            return f"Garment description: {media.text}\n\n{text}"
        data = base64.b64encode(media.image_bytes()).decode("ascii")
        suffix = Path(media.path).suffix.lower().lstrip(".") or "png"
        mime = "jpeg" if suffix == "jpg" else suffix
        return [
            {"type": "text", "text": text},
            {"type": "image_url", "image_url": {"url": f"data:image/{mime};base64,{data}"}},
        ]

    def complete(self, text: str, media: Media) -> str:
        payload = {
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": self._content(text, media)}],
        }
        url = self.config.endpoint.rstrip("/") + "/chat/completions"
        delay = self.config.backoff
        last = None
        for attempt in range(self.config.max_retries + 1):
            try:
                with self._slots:
                    resp = self.client.post(url, json=payload)
                if resp.status_code == 429 or resp.status_code >= 500:
                    last = f"HTTP {resp.status_code}"
                else:
                    resp.raise_for_status()
                    return self._parse(resp.json())
            except httpx.HTTPStatusError as exc:
                raise TransportError(f"HTTP {exc.response.status_code}: {exc.response.text[:200]}") from exc
            except (httpx.TransportError, json.JSONDecodeError) as exc:
                last = repr(exc)
            if attempt < self.config.max_retries:
                log.warning("request failed (%s), retrying in %.1fs", last, delay)
                self._sleep(delay)
                delay *= 2
        raise TransportError(f"giving up after {self.config.max_retries + 1} attempts: {last}")

    def _parse(self, body: Mapping) -> str:
        try:
            message = body["choices"][0]["message"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed response: {body!r:.200}") from exc
        if message.get("refusal"):
            raise Refusal(message["refusal"])
        content = message.get("content") or ""
        if isinstance(content, list):
            content = "".join(part.get("text", "") for part in content)
        if any(p.search(content) for p in self._refusal):
            raise Refusal(content[:200])
        return content

    def list_layers(self, media: Media) -> str:
        options = " | ".join(("top", "dress", "skirt", "pants", "jumpsuit"))
        return self.complete(LAYER_PROMPT.format(options=options), media)

    def answer(self, question: Question, media: Media, layer: LayerDescriptor) -> str:
        prefix = f"Consider only garment layer {layer.index} (0 = innermost), a {layer.category}.\n"
        return self.complete(prefix + question.prompt_text, media)


# -- batch I/O ---------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    id: str
    media: Media
    label: str | None = None


def load_manifest(path: str | Path) -> list[ManifestEntry]:
    path = Path(path)
    raw = json.loads(path.read_text(encoding="utf-8"))
    entries = []
    for item in raw:
        if "text" in item:
            media = Media.from_text(item["text"])
        else:
            media = Media.from_image(path.parent / item["media"])
        label = str(path.parent / item["label"]) if item.get("label") else None
        entries.append(ManifestEntry(str(item["id"]), media, label))
    return entries


def load_labels(path: str | Path) -> list[NGLDocument]:
    """One NGL document or a list of them (one per layer)."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, list):
        return [NGLDocument.from_json(d) for d in data]
    return [NGLDocument.from_json(data)]


def write_outputs(result: OutfitResult, out_dir: str | Path) -> Path:
    """Per-input output directory; JSON files hold one entry per completed layer."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    layers = sorted(result.layers, key=lambda r: r.layer.index)
    (out / "ngl.json").write_text(canonical_json([r.ngl.to_json() for r in layers]))
    (out / "garmentcode.json").write_text(canonical_json([r.garmentcode for r in layers]))
    (out / "pattern.json").write_text(canonical_json([r.pattern.to_json() for r in layers]))
    merged = merge_patterns([r.pattern for r in layers], [f"layer{r.layer.index}/" for r in layers])
    (out / "pattern.svg").write_text(render_svg(merged))
    transcripts = [
        {"layer_index": i, "turns": [dict(t, timestamp=round(t["timestamp"], 3)) for t in turns]}
        for i, turns in sorted(result.transcripts.items())
    ]
    (out / "transcript.json").write_text(json.dumps(transcripts, indent=2) + "\n")
    (out / "failures.json").write_text(canonical_json([f.to_json() for f in result.failures]))
    return out
