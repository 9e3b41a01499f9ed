"""Enumerate every LOD-0 answer path, compile each document and check its pattern.

Prints per-category counts, the longest session and any compile/pattern problems.
"""

import argparse
import collections
import time

from nglprompter.compiler import compile_document, load_mapping
from nglprompter.patterngen import check_pattern, generate_pattern, seam_mismatches
from nglprompter.planner import run_session
from nglprompter.schema import load_schema
from nglprompter.synth import enumerate_answer_paths, enumerate_documents


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--lod", type=int, choices=(0, 1), default=0)
    args = parser.parse_args()

    schema = load_schema(lod=args.lod)
    table = load_mapping()
    start = time.perf_counter()
    paths = list(enumerate_answer_paths(schema))
    docs = list(enumerate_documents(schema))
    per_category = collections.Counter(d.values["garment_category"] for d in docs)
    longest, problems, worst = 0, 0, 0.0
    for doc in docs:
        transcript = []
        run_session(schema, lambda q, d=doc: d.values[q.attribute_id], transcript=transcript)
        longest = max(longest, len(transcript))
        try:
            pattern = generate_pattern(compile_document(doc, schema, table))
        except Exception as exc:
            print(f"FAILED {doc.values}: {exc}")
            problems += 1
            continue
        for v in check_pattern(pattern):
            print(f"{v.kind} {v.where}: {v.message}  <- {doc.values}")
            problems += 1
        worst = max([worst] + seam_mismatches(pattern))
    elapsed = time.perf_counter() - start

    print(f"LOD-{args.lod}: {len(schema)} attributes, {len(paths)} answer paths, {len(docs)} documents")
    for category, n in sorted(per_category.items()):
        print(f"  {category:<10} {n}")
    print(f"longest session: {longest} questions")
    print(f"problems: {problems}, worst seam mismatch {100 * worst:.4f}%")
    print(f"elapsed: {elapsed:.2f}s")


if __name__ == "__main__":
    main()
