"""Random-logit fuzzing of the constrained decoder."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .decoder import ToyBPETokenizer, Tokenizer, build_trie, constrained_argmax_decode
from .schema import NGLSchema

# Option sets whose token encodings are prefixes of one another.
PREFIX_OVERLAP_SETS = (
    ("a", "ab"),
    ("a", "ab", "abc"),
    ("no", "not", "none"),
    ("mini", "minis", "mini-a"),
    ("long", "longer", "long-ish"),
    ("v", "v-neck", "v-necks"),
    ("fit", "fitted", "fitt"),
    ("st", "str", "straight"),
)


def fuzz_option_sets(schema: NGLSchema | None = None) -> list[tuple[str, ...]]:
    sets = list(PREFIX_OVERLAP_SETS)
    sets.append(("crew", "v-neck", "square", "scoop", "boat"))
    if schema is not None:
        for attr in schema.attributes:
            if attr.options not in sets:
                sets.append(attr.options)
    return sets


@dataclass
class FuzzResult:
    sequences: int = 0
    in_set: int = 0
    option_sets: int = 0
    reached: dict[tuple[str, ...], set[str]] = field(default_factory=dict)

    @property
    def rate(self) -> float:
        return self.in_set / self.sequences if self.sequences else 0.0


def run_decoder_fuzz(
    option_sets: list[tuple[str, ...]],
    sequences: int,
    seed: int = 0,
    tokenizer: Tokenizer | None = None,
) -> FuzzResult:
    """Decode ``sequences`` random score streams spread over ``option_sets``.

    Scores mix gaussian noise, huge off-trie spikes, NaNs and infinities so
    that the mask, not the scores, decides what can be emitted.
    """
    tokenizer = tokenizer or ToyBPETokenizer()
    rng = np.random.default_rng(seed)
    tries = [build_trie(opts, tokenizer) for opts in option_sets]
    result = FuzzResult(option_sets=len(option_sets))
    size = tokenizer.vocab_size
    for i in range(sequences):
        trie = tries[i % len(tries)]
        mode = i % 4

        def scores(emitted, mode=mode):
            s = rng.normal(size=size) * rng.choice((0.1, 1.0, 100.0))
            if mode == 1:
                s[rng.integers(size)] = 1e9
            elif mode == 2:
                s[rng.random(size) < 0.3] = np.nan
            elif mode == 3:
                s[rng.random(size) < 0.3] = rng.choice((np.inf, -np.inf))
            return s

        answer = constrained_argmax_decode(scores, trie)
        result.sequences += 1
        result.in_set += answer in trie.options
        result.reached.setdefault(trie.options, set()).add(answer)
    return result
