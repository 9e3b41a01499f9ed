import base64
import json
import random
import threading

import httpx
import pytest

from nglprompter.pipeline import (
    FaultInjectingBackend, HttpBackendConfig, HttpChatBackend, InteractiveBackend,
    KeywordTextBackend, LayerDescriptor, Media, OracleBackend, OutfitResult, failure_rate,
    identify_layers, load_manifest, parse_layer_text, process_outfit, write_outputs,
)
from nglprompter.planner import FailureRecord, Question, Refusal, TransportError
from nglprompter.schema import NGLDocument
from nglprompter.synth import random_outfit

from conftest import complete

TEXT = Media.from_text("an outfit")


def outfit(schema, *categories):
    return [NGLDocument(schema.version, complete(schema, garment_category=c).values, i)
            for i, c in enumerate(categories)]


def test_oracle_layer_passthrough(schema0):
    layers = identify_layers(OracleBackend(outfit(schema0, "top", "top")), TEXT, schema0)
    assert layers == [LayerDescriptor(0, "top"), LayerDescriptor(1, "top")]
    assert len(identify_layers(OracleBackend(outfit(schema0, "dress")), TEXT, schema0)) == 1


def test_free_text_layers(schema0):
    cats = schema0.options("garment_category")
    assert parse_layer_text("blazer over tee over jeans", cats) == ["pants", "top", "top"]
    assert parse_layer_text("t-shirt\njeans\nblazer", cats) == ["top", "pants", "top"]
    backend = KeywordTextBackend()
    layers = identify_layers(backend, Media.from_text("blazer over tee over jeans"), schema0)
    assert [l.index for l in layers] == [0, 1, 2]


def test_layer_refusal(schema0):
    backend = FaultInjectingBackend(OracleBackend(outfit(schema0, "top")), refuse_layers=True)
    result = process_outfit(backend, TEXT, schema0)
    assert [(f.stage, f.reason) for f in result.failures] == [("layer-id", "refusal")]


def test_image_for_text_only_backend(schema0, tmp_path):
    img = tmp_path / "a.png"
    img.write_bytes(b"png")
    layers = identify_layers(KeywordTextBackend(), Media.from_image(img), schema0)
    assert isinstance(layers, FailureRecord) and layers.stage == "layer-id"


@pytest.mark.parametrize("logits", [False, True])
def test_two_layer_round_trip(schema1, logits):
    labels = outfit(schema1, "pants", "top")
    result = process_outfit(OracleBackend(labels, logits=logits), TEXT, schema1, jobs=2)
    assert result.ok
    assert [r.ngl for r in result.layers] == labels
    for r in result.layers:
        assert r.garmentcode["meta"]
        assert r.pattern.panels


def test_refusing_one_layer_isolated(schema1):
    labels = outfit(schema1, "skirt", "top")
    clean = process_outfit(OracleBackend(labels), TEXT, schema1)
    faulty = process_outfit(FaultInjectingBackend(OracleBackend(labels), refuse_layer_index=1), TEXT, schema1)
    assert [r.layer.index for r in faulty.layers] == [0]
    assert faulty.layers[0].ngl == clean.layers[0].ngl
    [f] = faulty.failures
    assert (f.stage, f.layer_index, f.reason) == ("qa", 1, "refusal")


def test_garbled_answers_fail_after_one_reask(schema0):
    labels = outfit(schema0, "top")
    calls = []
    inner = OracleBackend(labels)
    backend = FaultInjectingBackend(inner, garble_layer_index=0)
    original = backend.answer
    backend.answer = lambda q, m, l: calls.append(q) or original(q, m, l)
    result = process_outfit(backend, TEXT, schema0)
    [f] = result.failures
    assert (f.stage, f.reason) == ("qa", "invalid-answer")
    assert len(calls) == 2 and "not one of the options" in calls[1].prompt_text


def test_text_input(schema1):
    result = process_outfit(KeywordTextBackend(), Media.from_text("a maxi circle skirt"), schema1)
    assert result.ok
    [layer] = result.layers
    assert layer.ngl.values["skirt_length"] == "maxi"
    assert layer.ngl.values["skirt_silhouette"] == "circle"


def test_failure_rate_counts():
    bad = OutfitResult(failures=[FailureRecord("qa", "refusal", 0)])
    assert failure_rate([bad] * 18 + [OutfitResult()] * 18) == 0.5
    assert failure_rate([OutfitResult()] * 5) == 0.0
    assert failure_rate([bad] + [OutfitResult()] * 143) == pytest.approx(0.0069, abs=5e-5)
    with pytest.raises(ValueError):
        failure_rate([])


def test_logit_answers_always_in_schema(schema1):
    rng = random.Random(4)

    class Noisy(OracleBackend):
        def next_token_scores(self, question, media, layer, emitted):
            return [rng.gauss(0, 5) for _ in range(self.tokenizer.vocab_size)]

    labels = outfit(schema1, "dress", "top")
    result = process_outfit(Noisy(labels, logits=True), TEXT, schema1)
    assert result.ok
    for r in result.layers:
        assert all(v in schema1.options(k) for k, v in r.ngl.values.items())


def test_write_outputs(schema0, tmp_path):
    result = process_outfit(OracleBackend(outfit(schema0, "pants", "top")), TEXT, schema0)
    out = write_outputs(result, tmp_path / "o1")
    names = {p.name for p in out.iterdir()}
    assert names == {"ngl.json", "garmentcode.json", "pattern.json", "pattern.svg",
                     "transcript.json", "failures.json"}
    assert len(json.loads((out / "ngl.json").read_text())) == 2
    assert json.loads((out / "failures.json").read_text()) == []
    assert "layer1/front" in (out / "pattern.svg").read_text()


def test_manifest(tmp_path):
    (tmp_path / "m.json").write_text(json.dumps([
        {"id": "a", "media": "a.png", "label": "a.json"},
        {"id": "b", "text": "a red dress"},
    ]))
    a, b = load_manifest(tmp_path / "m.json")
    assert a.media.kind == "image" and a.media.path == str(tmp_path / "a.png")
    assert a.label == str(tmp_path / "a.json")
    assert b.media == Media.from_text("a red dress") and b.label is None


def test_interactive_reasks_until_valid():
    typed = iter(["dunno", "V neck"])
    shown = []
    backend = InteractiveBackend(input_fn=lambda prompt: next(typed), output_fn=shown.append)
    q = Question("neckline_shape", "Neckline?", ("crew", "v-neck", "square", "scoop", "boat"))
    assert backend.answer(q, TEXT, LayerDescriptor(0, "top")) == "v-neck"
    assert any("Please answer" in s for s in shown)


# -- HTTP backend ---------------------------------------------------------------

def chat(content=None, refusal=None):
    return {"choices": [{"message": {"role": "assistant", "content": content, "refusal": refusal}}]}


def http_backend(handler, **kwargs):
    config = HttpBackendConfig("http://model.test/v1", "m", api_key="secret", backoff=0.01, **kwargs)
    client = httpx.Client(transport=httpx.MockTransport(handler))
    return HttpChatBackend(config, client, sleep=lambda s: None)


def test_http_request_shape(tmp_path):
    img = tmp_path / "look.jpg"
    img.write_bytes(b"\xff\xd8jpeg")
    seen = []

    def handler(request):
        seen.append(request)
        return httpx.Response(200, json=chat("V-neck"))

    backend = http_backend(handler)
    q = Question("neckline_shape", "Neckline?", ("crew", "v-neck"))
    assert backend.answer(q, Media.from_image(img), LayerDescriptor(0, "top")) == "V-neck"
    request = seen[0]
    assert request.url == "http://model.test/v1/chat/completions"
    assert request.headers["authorization"] == "Bearer secret"
    body = json.loads(request.content)
    parts = body["messages"][0]["content"]
    assert parts[1]["image_url"]["url"] == "data:image/jpeg;base64," + base64.b64encode(b"\xff\xd8jpeg").decode()
    assert "Neckline?" in parts[0]["text"]


def test_http_retries_with_backoff():
    attempts = []
    delays = []

    def handler(request):
        attempts.append(1)
        return httpx.Response(503) if len(attempts) < 3 else httpx.Response(200, json=chat("yes"))

    backend = http_backend(handler)
    backend._sleep = delays.append
    assert backend.complete("q", TEXT) == "yes"
    assert len(attempts) == 3 and delays == [0.01, 0.02]


def test_http_gives_up():
    backend = http_backend(lambda r: httpx.Response(500), max_retries=2)
    with pytest.raises(TransportError):
        backend.complete("q", TEXT)


def test_http_client_error_is_not_retried():
    calls = []
    backend = http_backend(lambda r: calls.append(1) or httpx.Response(401, text="bad key"))
    with pytest.raises(TransportError, match="401"):
        backend.complete("q", TEXT)
    assert len(calls) == 1


def test_http_refusals():
    backend = http_backend(lambda r: httpx.Response(200, json=chat("I'm sorry, I can't help with that.")))
    with pytest.raises(Refusal):
        backend.complete("q", TEXT)
    backend = http_backend(lambda r: httpx.Response(200, json=chat(None, refusal="policy")))
    with pytest.raises(Refusal):
        backend.complete("q", TEXT)


def test_http_bounds_in_flight_requests(schema0):
    lock = threading.Lock()
    state = {"now": 0, "peak": 0}

    def handler(request):
        with lock:
            state["now"] += 1
            state["peak"] = max(state["peak"], state["now"])
        text = json.loads(request.content)["messages"][0]["content"]
        threading.Event().wait(0.002)
        with lock:
            state["now"] -= 1
        if text.startswith("Garment description") and "List every" in text:
            return httpx.Response(200, json=chat("skirt\nskirt\nskirt\nskirt"))
        options = text.rsplit("Answer with exactly one of: ", 1)[1].split(" | ")
        return httpx.Response(200, json=chat(options[-1]))

    backend = http_backend(handler, max_in_flight=2)
    result = process_outfit(backend, TEXT, schema0, jobs=4)
    assert result.ok and len(result.layers) == 4
    assert state["peak"] <= 2


def test_http_end_to_end_refusal_is_recorded(schema0):
    def handler(request):
        return httpx.Response(200, json=chat("I cannot assist with identifying that."))
    result = process_outfit(http_backend(handler), TEXT, schema0)
    [f] = result.failures
    assert (f.stage, f.reason) == ("layer-id", "refusal")


def test_random_outfits_round_trip(schema1):
    rng = random.Random(11)
    for _ in range(10):
        labels = random_outfit(schema1, rng)
        result = process_outfit(OracleBackend(labels), TEXT, schema1)
        assert result.ok and [r.ngl for r in result.layers] == labels


def test_partially_labeled_oracle(schema0):
    partial = [NGLDocument(schema0.version, {"garment_category": "skirt"})]
    text = process_outfit(OracleBackend(partial), TEXT, schema0)
    [f] = text.failures
    assert (f.stage, f.reason) == ("qa", "invalid-answer")
    # with logit access unlabeled questions still decode to some valid option
    logits = process_outfit(OracleBackend(partial, logits=True), TEXT, schema0)
    assert logits.ok and logits.layers[0].ngl.values["garment_category"] == "skirt"
