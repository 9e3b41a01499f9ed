"""End-to-end evaluation on synthetic outfits.

Backends: ``oracle`` replays labels (F1 should be 1.0), ``noisy`` is an
oracle with logit access whose scores are corrupted with gaussian noise, so
answers stay in-schema but drift from the labels. ``--refuse`` makes a share
of outfits refuse their outermost layer.
"""

import argparse
import json
import random

import numpy as np

from nglprompter.evalkit import LabeledExample, lod_report
from nglprompter.pipeline import FaultInjectingBackend, Media, OracleBackend, failure_rate, process_outfit
from nglprompter.schema import load_schema
from nglprompter.synth import synthetic_outfits


class NoisyOracle(OracleBackend):
    def __init__(self, labels, noise, rng):
        super().__init__(labels, logits=True)
        self.noise = noise
        self.rng = rng

    def next_token_scores(self, question, media, layer, emitted):
        clean = np.asarray(super().next_token_scores(question, media, layer, emitted))
        return clean + self.rng.normal(scale=self.noise, size=clean.shape)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--outfits", type=int, default=100)
    parser.add_argument("--multi", type=int, default=30, help="outfits with 2-3 layers")
    parser.add_argument("--backend", choices=("oracle", "noisy"), default="oracle")
    parser.add_argument("--noise", type=float, default=8.0)
    parser.add_argument("--refuse", type=float, default=0.0, help="share of outfits that refuse")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--json", help="write the F1 report here")
    args = parser.parse_args()

    schema = load_schema(lod=1)
    rng = random.Random(args.seed)
    nrng = np.random.default_rng(args.seed)
    results, examples = [], []
    for i, labels in enumerate(synthetic_outfits(schema, args.outfits, args.multi, seed=args.seed)):
        backend = OracleBackend(labels) if args.backend == "oracle" else NoisyOracle(labels, args.noise, nrng)
        if rng.random() < args.refuse:
            backend = FaultInjectingBackend(backend, refuse_layer_index=len(labels) - 1)
        result = process_outfit(backend, Media.from_text("synthetic"), schema)
        results.append(result)
        done = {r.layer.index: r.ngl for r in result.layers}
        failed = {f.layer_index: f for f in result.failures}
        for truth in labels:
            prediction = done.get(truth.layer_index) or failed.get(truth.layer_index) or failed.get(None)
            examples.append(LabeledExample(f"{i}/{truth.layer_index}", truth, prediction))

    report = lod_report(examples, schema)
    print(report.to_text())
    print(f"outfit failure rate: {failure_rate(results):.2%}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(report.to_json(), fh, indent=2)


if __name__ == "__main__":
    main()
