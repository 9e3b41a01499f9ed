"""Constrained decoding of option answers.

The allowed answers for a question are tokenized and stored in a trie keyed
by token ids. At every generation step only the children of the current trie
node may be emitted, plus an end-of-answer sentinel once the path spells a
complete option. Whatever the scores look like, greedy decoding under this
mask ends on one of the options.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np


class Tokenizer(Protocol):
    vocab_size: int
    eos_id: int

    def encode(self, text: str) -> list[int]: ...

    def decode(self, ids: Sequence[int]) -> str: ...


ALPHABET = "abcdefghijklmnopqrstuvwxyz0123456789- "

# Merge table, highest priority first. Chosen so that common option words
# split into a mix of single and multi token encodings.
DEFAULT_MERGES = (
    ("n", "e"), ("ne", "c"), ("nec", "k"),
    ("c", "r"), ("cr", "e"), ("cre", "w"),
    ("y", "e"), ("ye", "s"), ("n", "o"),
    ("i", "n"), ("e", "r"), ("o", "n"), ("a", "r"), ("l", "o"), ("lo", "n"), ("lon", "g"),
    ("s", "h"), ("sh", "o"), ("sho", "r"), ("shor", "t"),
    ("t", "o"), ("to", "p"), ("f", "it"), ("i", "t"), ("fit", "t"),
    ("e", "d"), ("s", "t"), ("st", "r"), ("str", "a"), ("stra", "i"), ("strai", "g"),
    ("a", "i"), ("g", "h"), ("strai", "gh"), ("straigh", "t"),
    ("m", "i"), ("mi", "d"), ("mid", "i"), ("mi", "n"), ("min", "i"),
    ("w", "a"), ("wa", "i"), ("wai", "s"), ("wais", "t"),
    ("l", "e"), ("e", "v"), ("o", "u"), ("r", "e"), ("a", "l"), ("e", "s"),
)


class ToyBPETokenizer:
    """Deterministic byte-pair tokenizer over a fixed merge table.

    Base vocabulary is one id per character of ``ALPHABET``; each merge adds
    one id. The last id is reserved for the end-of-answer sentinel.
    """

    def __init__(self, merges: Sequence[tuple[str, str]] = DEFAULT_MERGES, alphabet: str = ALPHABET):
        self.alphabet = alphabet
        self.merges = tuple(merges)
        self._rank = {}
        vocab = list(alphabet)
        for rank, (left, right) in enumerate(self.merges):
            self._rank.setdefault((left, right), rank)
            if left + right not in vocab:
                vocab.append(left + right)
        self._vocab = vocab
        self._id = {tok: i for i, tok in enumerate(vocab)}
        self.eos_id = len(vocab)
        self.vocab_size = len(vocab) + 1

    def encode(self, text: str) -> list[int]:
        bad = set(text) - set(self.alphabet)
        if bad:
            raise ValueError(f"characters outside tokenizer alphabet: {sorted(bad)}")
        pieces = list(text)
        while len(pieces) > 1:
            ranked = [
                (self._rank.get((pieces[i], pieces[i + 1]), None), i)
                for i in range(len(pieces) - 1)
            ]
            ranked = [(r, i) for r, i in ranked if r is not None]
            if not ranked:
                break
            best = min(r for r, _ in ranked)
            merged, i = [], 0
            while i < len(pieces):
                if i < len(pieces) - 1 and self._rank.get((pieces[i], pieces[i + 1])) == best:
                    merged.append(pieces[i] + pieces[i + 1])
                    i += 2
                else:
                    merged.append(pieces[i])
                    i += 1
            pieces = merged
        return [self._id[p] for p in pieces]

    def decode(self, ids: Sequence[int]) -> str:
        return "".join(self._vocab[i] for i in ids if i != self.eos_id)

    def token(self, token_id: int) -> str:
        return "<eos>" if token_id == self.eos_id else self._vocab[token_id]


class TrieError(ValueError):
    pass


@dataclass
class TrieNode:
    children: dict[int, "TrieNode"] = field(default_factory=dict)
    option: str | None = None

    @property
    def terminal(self) -> bool:
        return self.option is not None


@dataclass(frozen=True)
class OptionTrie:
    root: TrieNode
    options: tuple[str, ...]
    encodings: dict[str, tuple[int, ...]]
    eos_id: int
    vocab_size: int

    @property
    def option_count(self) -> int:
        return len(self.options)

    def node_at(self, path: Sequence[int]) -> TrieNode:
        node = self.root
        for tok in path:
            node = node.children[tok]
        return node

    def terminal_paths(self) -> dict[tuple[int, ...], str]:
        out = {}
        stack = [((), self.root)]
        while stack:
            path, node = stack.pop()
            if node.terminal:
                out[path] = node.option
            for tok, child in node.children.items():
                stack.append((path + (tok,), child))
        return out


def build_trie(options: Sequence[str], tokenizer: Tokenizer) -> OptionTrie:
    if not options:
        raise TrieError("cannot build a trie over an empty option list")
    if len(set(options)) != len(options):
        raise TrieError(f"duplicate options: {list(options)}")
    root = TrieNode()
    encodings = {}
    seen = {}
    for opt in options:
        try:
            ids = tuple(tokenizer.encode(opt))
        except ValueError as exc:
            raise TrieError(f"option {opt!r} cannot be tokenized: {exc}") from None
        if not ids:
            raise TrieError(f"option {opt!r} encodes to no tokens")
        if tokenizer.decode(ids) != opt:
            raise TrieError(f"tokenizer does not round-trip {opt!r}")
        if ids in seen:
            raise TrieError(f"options {seen[ids]!r} and {opt!r} share the encoding {ids}")
        if tokenizer.eos_id in ids:
            raise TrieError(f"option {opt!r} encodes to the sentinel id")
        seen[ids] = opt
        encodings[opt] = ids
        node = root
        for tok in ids:
            node = node.children.setdefault(tok, TrieNode())
        node.option = opt
    return OptionTrie(root, tuple(options), encodings, tokenizer.eos_id, tokenizer.vocab_size)


@dataclass
class DecodeState:
    trie: OptionTrie
    node: TrieNode = None
    emitted: list[int] = field(default_factory=list)

    def __post_init__(self):
        if self.node is None:
            self.node = self.trie.node_at(self.emitted)

    def advance(self, token_id: int) -> None:
        if token_id not in self.node.children:
            raise TrieError(f"token {token_id} not allowed after {self.emitted}")
        self.node = self.node.children[token_id]
        self.emitted.append(token_id)


def allowed_tokens(state: DecodeState) -> tuple[frozenset[int], bool]:
    """Child token ids of the current node and whether the sentinel may end the answer."""
    return frozenset(state.node.children), state.node.terminal


def mask_scores(state: DecodeState, scores: Sequence[float]) -> np.ndarray:
    """Logits-processor view: disallowed ids (and NaNs) set to -inf."""
    scores = np.asarray(scores, dtype=float)
    if scores.shape != (state.trie.vocab_size,):
        raise ValueError(f"expected {state.trie.vocab_size} scores, got shape {scores.shape}")
    allowed, sentinel = allowed_tokens(state)
    keep = np.zeros(scores.shape, dtype=bool)
    keep[list(allowed)] = True
    if sentinel:
        keep[state.trie.eos_id] = True
    masked = np.where(keep & ~np.isnan(scores), scores, -np.inf)
    return masked


def constrained_argmax_decode(
    logit_source: Callable[[list[int]], Sequence[float]],
    trie: OptionTrie,
) -> str:
    """Greedy decode restricted to the trie. Ties go to the lowest token id."""
    state = DecodeState(trie)
    while True:
        allowed, sentinel = allowed_tokens(state)
        if not allowed:
            return state.node.option
        candidates = sorted(allowed | {trie.eos_id}) if sentinel else sorted(allowed)
        masked = mask_scores(state, logit_source(list(state.emitted)))
        best = candidates[0]
        for tok in candidates[1:]:
            if masked[tok] > masked[best]:
                best = tok
        if best == trie.eos_id:
            return state.node.option
        state.advance(best)


@dataclass(frozen=True)
class NoMatch:
    ambiguous: bool = False
    candidates: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return False


def _norm(text: str) -> str:
    return re.sub(r"[\s\-_]+", " ", text.strip().lower()).strip()


def match_free_text(
    answer: str,
    options: Sequence[str],
    aliases: dict[str, Sequence[str]] | None = None,
) -> str | NoMatch:
    """Map a free-text answer onto one option.

    Exact match after normalization first, then whole-word occurrences.
    Occurrences nested inside a longer matched option are ignored; two or
    more distinct options left over is ambiguous. ``aliases`` maps extra
    phrases (e.g. synonyms) onto options.
    """
    text = _norm(answer)
    phrases = [(opt, opt) for opt in options]
    for opt, words in (aliases or {}).items():
        if opt in options:
            phrases.extend((w, opt) for w in words)
    for phrase, opt in phrases:
        if text == _norm(phrase):
            return opt

    hits = []
    for phrase, opt in phrases:
        pattern = r"(?<![a-z0-9])" + re.escape(_norm(phrase)) + r"(?![a-z0-9])"
        hits.extend((m.start(), m.end(), opt) for m in re.finditer(pattern, text))
    # longest first so nested spans are dropped in favour of the enclosing one
    hits.sort(key=lambda h: (-(h[1] - h[0]), h[0]))
    kept = []
    for start, end, opt in hits:
        if not any(s <= start and end <= e for s, e, _ in kept):
            kept.append((start, end, opt))
    found = sorted({opt for _, _, opt in kept}, key=list(options).index)
    if len(found) == 1:
        return found[0]
    if len(found) > 1:
        return NoMatch(ambiguous=True, candidates=tuple(found))
    return NoMatch()
