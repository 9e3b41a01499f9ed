import json
import random

import pytest

from nglprompter import cli
from nglprompter.pipeline import InteractiveBackend
from nglprompter.schema import NGLDocument
from nglprompter.synth import random_document, synthetic_outfits

from conftest import complete


@pytest.fixture
def dress_file(tmp_path, schema0):
    path = tmp_path / "dress.json"
    path.write_text(json.dumps(complete(schema0, garment_category="dress").to_json()))
    return path


def test_schema_dump_lod0(capsys):
    assert cli.main(["schema", "dump", "--lod", "0"]) == 0
    assert len(json.loads(capsys.readouterr().out)["attributes"]) == 27


def test_schema_validate(dress_file, tmp_path, capsys):
    assert cli.main(["schema", "validate", "--lod", "0", str(dress_file)]) == 0
    bad = json.loads(dress_file.read_text())
    bad["values"]["collar_style"] = "mandarin"
    (tmp_path / "bad.json").write_text(json.dumps(bad))
    assert cli.main(["schema", "validate", "--lod", "0", str(tmp_path / "bad.json")]) != 0
    assert "unknown-attribute: collar_style" in capsys.readouterr().out


def test_compile_then_pattern(dress_file, tmp_path):
    gc = tmp_path / "garmentcode.json"
    assert cli.main(["compile", "--lod", "0", str(dress_file), "--out", str(gc)]) == 0
    params = json.loads(gc.read_text())
    assert params["meta"]["upper"]["v"] and params["meta"]["bottom"]["v"]
    first = gc.read_bytes()
    assert cli.main(["compile", "--lod", "0", str(dress_file), "--out", str(gc)]) == 0
    assert gc.read_bytes() == first
    assert cli.main(["pattern", str(gc), "--out", str(tmp_path / "pat")]) == 0
    svg = (tmp_path / "pat" / "pattern.svg").read_text()
    assert 'id="front"' in svg and 'id="skirt-front' in svg


def test_compile_rejects_incomplete(tmp_path):
    doc = tmp_path / "partial.json"
    doc.write_text(json.dumps(NGLDocument("ngl-1.0", {"garment_category": "skirt"}).to_json()))
    assert cli.main(["compile", str(doc)]) == 1


def write_manifest(tmp_path, schema, with_missing_image=False):
    entries = []
    for i, labels in enumerate(synthetic_outfits(schema, 3, 1, seed=2)):
        (tmp_path / f"label{i}.json").write_text(json.dumps([d.to_json() for d in labels]))
        image = f"img{i}.png"
        if not (with_missing_image and i == 1):
            (tmp_path / image).write_bytes(b"\x89PNG")
        entries.append({"id": f"look{i}", "media": image, "label": f"label{i}.json"})
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps(entries))
    return manifest


def test_run_oracle_manifest(tmp_path, schema1, capsys):
    manifest = write_manifest(tmp_path, schema1)
    out = tmp_path / "out"
    assert cli.main(["run", str(manifest), "--backend", "oracle", "--out", str(out), "--jobs", "2"]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["look0", "look1", "look2"]
    assert "failure rate: 0/3 = 0.00%" in capsys.readouterr().out
    before = {p: p.read_bytes() for p in out.rglob("*.json") if p.name != "transcript.json"}
    cli.main(["run", str(manifest), "--out", str(out)])
    assert before == {p: p.read_bytes() for p in out.rglob("*.json") if p.name != "transcript.json"}


def test_run_isolates_unreadable_image(tmp_path, schema1):
    manifest = write_manifest(tmp_path, schema1, with_missing_image=True)
    out = tmp_path / "out"
    assert cli.main(["run", str(manifest), "--out", str(out)]) == 1
    assert json.loads((out / "look1" / "failures.json").read_text())[0]["stage"] == "layer-id"
    for ok in ("look0", "look2"):
        assert json.loads((out / ok / "failures.json").read_text()) == []
        assert json.loads((out / ok / "ngl.json").read_text())


def test_run_interactive(tmp_path, monkeypatch):
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps([{"id": "t", "text": "a top"}]))

    class Scripted(InteractiveBackend):
        """Types the first option, except a loosely written "V neck" for necklines."""

        def __init__(self):
            self.shown = ""
            super().__init__(input_fn=self.reply, output_fn=self.show)

        def show(self, text):
            self.shown = text

        def reply(self, prompt):
            if "layers" in prompt:
                return "top"
            options = self.shown.rsplit("Answer with exactly one of: ", 1)[1].split(" | ")
            return "V neck" if "v-neck" in options else options[0]

    monkeypatch.setattr(cli, "InteractiveBackend", Scripted)
    out = tmp_path / "out"
    assert cli.main(["run", str(manifest), "--backend", "interactive", "--out", str(out)]) == 0
    [doc] = json.loads((out / "t" / "ngl.json").read_text())
    assert doc["values"]["neckline_shape"] == "v-neck"


def test_eval_perfect(tmp_path, schema1, capsys):
    rng = random.Random(1)
    for d in ("labels", "preds"):
        (tmp_path / d).mkdir()
    for i in range(20):
        doc = random_document(schema1, rng).to_json()
        for d in ("labels", "preds"):
            (tmp_path / d / f"{i}.json").write_text(json.dumps(doc))
    assert cli.main(["eval", str(tmp_path / "labels"), str(tmp_path / "preds"),
                     "--out", str(tmp_path / "report.json")]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["groups"] == {"lod0": 1.0, "lod1": 1.0, "lod0&lod1": 1.0}
    assert "macro F1 [lod1]: 1.0000" in capsys.readouterr().out


def test_bad_config_exits_nonzero(capsys):
    assert cli.main(["schema", "dump", "--jobs", "0"]) == 2
