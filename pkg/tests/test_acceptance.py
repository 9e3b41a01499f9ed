"""Acceptance criteria, one test each, each printing a PASS/FAIL line.

Run standalone with ``python tests/test_acceptance.py`` or through pytest,
where the lines are repeated in the terminal summary.
"""

import hashlib
import random
import subprocess
import sys
import time
from pathlib import Path

import pytest

from nglprompter import pipeline
from nglprompter.compiler import compile_document, leaf_value, load_mapping
from nglprompter.evalkit import LabeledExample, attribute_f1, lod_report
from nglprompter.fuzz import PREFIX_OVERLAP_SETS, fuzz_option_sets, run_decoder_fuzz
from nglprompter.patterngen import check_pattern, generate_pattern, polyline_length, seam_mismatches
from nglprompter.pipeline import (
    FaultInjectingBackend, Media, OracleBackend, OutfitResult, failure_rate, process_outfit,
)
from nglprompter.planner import run_session
from nglprompter.schema import NGLDocument, load_schema, validate_document
from nglprompter.serialize import canonical_json
from nglprompter.synth import enumerate_answer_paths, enumerate_documents, synthetic_outfits

sys.path.insert(0, str(Path(__file__).parent))
from oracles import brute_force_macro_f1  # noqa: E402

RESULTS: list[str] = []
TEXT = Media.from_text("outfit")


def report(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def lod0():
    return load_schema(lod=0)


@pytest.fixture(scope="module")
def lod1():
    return load_schema(lod=1)


@pytest.fixture(scope="module")
def docs0(lod0):
    return list(enumerate_documents(lod0))


def test_schema_counts():
    start = time.perf_counter()
    s0, s1 = load_schema(lod=0), load_schema(lod=1)
    nested = all(a.id in s1 and s1.options(a.id) == a.options for a in s0.attributes)
    elapsed = time.perf_counter() - start
    ok = len(s0) == 27 and len(s1) == 46 and nested and elapsed < 1.0
    report("schema counts", ok, f"lod0={len(s0)} lod1={len(s1)} nested={nested} in {elapsed:.3f}s (<1s)")


def test_decoder_safety_fuzz(lod1):
    start = time.perf_counter()
    sets = fuzz_option_sets(lod1)
    result = run_decoder_fuzz(sets, 10_000, seed=2024)
    elapsed = time.perf_counter() - start
    overlap = sum(1 for s in sets if s in PREFIX_OVERLAP_SETS)
    ok = (result.sequences >= 10_000 and len(sets) >= 20 and overlap > 0
          and result.in_set == result.sequences and elapsed < 30)
    report("decoder safety fuzz", ok,
           f"{result.in_set}/{result.sequences} in-set ({100 * result.rate:.2f}%) over {len(sets)} option sets "
           f"({overlap} prefix-overlapping) in {elapsed:.1f}s (<30s)")


def test_planner_termination_completeness(lod0, docs0):
    start = time.perf_counter()
    paths = list(enumerate_answer_paths(lod0))
    longest, bad = 0, 0
    for doc in docs0:
        transcript = []
        out = run_session(lod0, lambda q, d=doc: d.values[q.attribute_id], transcript=transcript)
        longest = max(longest, len(transcript))
        if not (isinstance(out, NGLDocument) and validate_document(lod0, out).ok and out == doc):
            bad += 1
    covered = {tuple(sorted(k for k in d.values)) for d in docs0} == {tuple(sorted(p)) for p in paths}
    elapsed = time.perf_counter() - start
    ok = bad == 0 and longest <= 27 and covered and elapsed < 120
    report("planner termination/completeness", ok,
           f"{len(paths)} answer paths, {len(docs0)} sessions, max {longest} questions (<=27), "
           f"{len(docs0) - bad}/{len(docs0)} valid, in {elapsed:.1f}s (<120s)")


HASH_SNIPPET = """
import hashlib
from nglprompter.compiler import compile_document
from nglprompter.schema import load_schema
from nglprompter.serialize import canonical_json
from nglprompter.synth import enumerate_documents
s = load_schema(lod=0)
h = hashlib.sha256()
for d in enumerate_documents(s):
    h.update(canonical_json(compile_document(d, s)).encode())
print(h.hexdigest())
"""


def test_compiler_totality_determinism(lod0, docs0):
    table = load_mapping()
    failures, digest = 0, hashlib.sha256()
    for doc in docs0:
        try:
            digest.update(canonical_json(compile_document(doc, lod0, table)).encode())
        except Exception:
            failures += 1
    runs = [subprocess.run([sys.executable, "-c", HASH_SNIPPET], capture_output=True, text=True,
                           check=True).stdout.strip() for _ in range(2)]
    identical = runs[0] == runs[1] == digest.hexdigest()
    ok = failures == 0 and identical
    report("compiler totality + determinism", ok,
           f"{len(docs0) - failures}/{len(docs0)} compiled, two independent runs byte-identical={identical}")


def test_ordinal_monotonicity(lod0):
    table = load_mapping()
    order = lod0.options("skirt_length")
    good = 0
    details = []
    for silhouette in lod0.options("skirt_silhouette"):
        scalars, heights = [], []
        for length in order:
            values = {"garment_category": "skirt", "overall_fit": "regular", "skirt_silhouette": silhouette,
                      "skirt_length": length, "skirt_volume": "medium", "skirt_hem_shape": "straight",
                      "skirt_has_slit": "no", "waist_rise": "mid", "has_waistband": "no"}
            params = compile_document(NGLDocument(lod0.version, values), lod0, table)
            section = table.bottom_sections[params["meta"]["bottom"]["v"]]
            scalars.append(leaf_value(params, section, "length"))
            x0, y0, x1, y1 = generate_pattern(params).panels[0].bounds()
            heights.append(y1 - y0)
        increasing = all(a < b for a, b in zip(scalars, scalars[1:])) and \
            all(a < b for a, b in zip(heights, heights[1:]))
        good += increasing
        details.append(f"{silhouette} {'/'.join(f'{h:.1f}' for h in heights)}")
    report("ordinal monotonicity", good == 5,
           f"{good}/5 silhouettes strictly increasing over {' < '.join(order)}; heights " + "; ".join(details))


def test_pattern_seam_invariant(lod0, docs0):
    table = load_mapping()
    violations, worst, stitches = 0, 0.0, 0
    for doc in docs0:
        pattern = generate_pattern(compile_document(doc, lod0, table))
        violations += len(check_pattern(pattern))
        mism = seam_mismatches(pattern)
        stitches += len(mism)
        worst = max([worst] + mism)
    circle = {"garment_category": "skirt", "overall_fit": "regular", "skirt_silhouette": "circle",
              "skirt_length": "midi", "skirt_volume": "medium", "skirt_hem_shape": "straight",
              "skirt_has_slit": "no", "waist_rise": "high", "has_waistband": "no"}
    pattern = generate_pattern(compile_document(NGLDocument(lod0.version, circle), lod0, table))
    inner = sum(polyline_length(p.edge_points(i)) for p in pattern.panels
                for t, i in p.tags.items() if t.startswith("top"))
    waist = 70.0
    arc_err = abs(inner - waist) / waist
    ok = violations == 0 and worst <= 0.01 and arc_err <= 0.01
    report("pattern seam invariant", ok,
           f"{violations} violations over {len(docs0)} patterns, max seam mismatch {100 * worst:.4f}% "
           f"over {stitches} stitches (<=1%), circle inner arc {inner:.3f} vs waist {waist} "
           f"({100 * arc_err:.3f}%, <=1%)")


def test_oracle_end_to_end(lod1):
    outfits = synthetic_outfits(lod1, 60, 15, seed=7)
    results, examples, mismatched = [], [], 0
    for i, labels in enumerate(outfits):
        result = process_outfit(OracleBackend(labels, logits=i % 2 == 0), TEXT, lod1, jobs=2)
        results.append(result)
        predicted = sorted(result.layers, key=lambda r: r.layer.index)
        if [r.ngl for r in predicted] != labels:
            mismatched += 1
        for truth, r in zip(labels, predicted):
            examples.append(LabeledExample(f"{i}/{truth.layer_index}", truth, r.ngl))
    groups = lod_report(examples, lod1).groups
    multi = sum(len(o) > 1 for o in outfits)
    rate = failure_rate(results)
    ok = (len(outfits) >= 50 and multi >= 10 and mismatched == 0 and rate == 0.0
          and all(v == 1.0 for v in groups.values()))
    report("oracle end-to-end fixpoint", ok,
           f"{len(outfits)} outfits ({multi} multi-layer), {mismatched} mismatched, "
           f"macro F1 {groups}, failure rate {rate}")


def test_f1_oracle_equivalence():
    rng = random.Random(1234)
    worst = 0.0
    for _ in range(1000):
        k = rng.randint(2, 5)
        opts = [f"o{j}" for j in range(k)]
        n = rng.randint(1, 30)
        pairs = [(rng.choice(opts), rng.choice(opts + ["<failed>"])) for _ in range(n)]
        exs = [LabeledExample(str(j), NGLDocument("v", {"x": t}), NGLDocument("v", {"x": p}))
               for j, (t, p) in enumerate(pairs)]
        worst = max(worst, abs(attribute_f1(exs, "x") - brute_force_macro_f1(*zip(*pairs))))
    hand = [("yes", "yes"), ("no", "yes"), ("no", "no")]
    exs = [LabeledExample(str(j), NGLDocument("v", {"x": t}), NGLDocument("v", {"x": p}))
           for j, (t, p) in enumerate(hand)]
    hand_value = attribute_f1(exs, "x")
    ok = worst <= 1e-9 and hand_value == 2 / 3
    report("F1 oracle equivalence", ok,
           f"1000 instances, max |diff| {worst:.2e} (<=1e-9); hand example {hand_value!r} == 2/3")


def test_failure_accounting(lod1, monkeypatch):
    outfits = synthetic_outfits(lod1, 147, 30, seed=99)
    table = load_mapping()

    def broken_pattern(params, body=None, prefix=""):
        raise ValueError("injected pattern fault")

    def broken_compile(doc, schema, table=None):
        raise ValueError("injected compile fault")

    def run(labels, fault):
        backend = OracleBackend(labels)
        if fault == "layer-id":
            backend = FaultInjectingBackend(backend, refuse_layers=True)
        elif fault == "qa":
            backend = FaultInjectingBackend(backend, refuse_layer_index=len(labels) - 1)
        elif fault == "qa-transport":
            backend = FaultInjectingBackend(backend, refuse_layer_index=0, transport_error=True)
        if fault == "compile":
            monkeypatch.setattr(pipeline, "compile_document", broken_compile)
        elif fault == "pattern":
            monkeypatch.setattr(pipeline, "generate_pattern", broken_pattern)
        try:
            return process_outfit(backend, TEXT, lod1, table)
        finally:
            monkeypatch.setattr(pipeline, "compile_document", compile_document)
            monkeypatch.setattr(pipeline, "generate_pattern", generate_pattern)

    stages = ["layer-id", "qa", "qa-transport", "compile", "pattern"]
    # 36 outfits, 18 faulted (cycling through every stage)
    results36 = [run(o, stages[i % 5] if i < 18 else None) for i, o in enumerate(outfits[:36])]
    seen = {f.stage for r in results36 for f in r.failures}
    rate36 = failure_rate(results36)
    # 147 outfits, exactly one refused
    results147 = [run(o, "qa" if i == 0 else None) for i, o in enumerate(outfits)]
    rate147 = failure_rate(results147)
    rate144 = failure_rate(results147[:144])
    ok = (rate36 == 18 / 36 == 0.5 and seen == {"layer-id", "qa", "compile", "pattern"}
          and rate147 == 1 / 147 and round(rate147, 4) == 0.0068 and round(rate144, 4) == 0.0069)
    report("failure accounting", ok,
           f"18/36 faulted -> {rate36:.2%} (stages {sorted(seen)}); 1/147 -> {rate147:.2%}; "
           f"1/144 -> {rate144:.2%}")


if __name__ == "__main__":
    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    print("\n".join(RESULTS))
    sys.exit(code)
