"""Synthetic NGL documents: exhaustive answer-path enumeration and random sampling."""

from __future__ import annotations

import random
from typing import Iterator, Mapping

from .schema import NGLDocument, NGLSchema, applicable_attributes


def branch_attributes(schema: NGLSchema) -> set[str]:
    """Attributes some other attribute depends on; their answers shape the question path."""
    return {dep for a in schema.attributes for dep, _ in a.depends_on}


def enumerate_answer_paths(schema: NGLSchema) -> Iterator[dict[str, str | None]]:
    """Every distinct question sequence the planner can produce.

    Branch attributes take every option; other attributes are left as None
    because their answer never changes which questions follow.
    """
    branches = branch_attributes(schema)

    def walk(values: dict) -> Iterator[dict]:
        pending = [a for a in applicable_attributes(schema, _concrete(values)) if a not in values]
        if not pending:
            yield dict(values)
            return
        attr_id = pending[0]
        if attr_id in branches:
            for option in schema.options(attr_id):
                yield from walk({**values, attr_id: option})
        else:
            yield from walk({**values, attr_id: None})

    yield from walk({})


def _concrete(values: Mapping[str, str | None]) -> dict[str, str]:
    # leaf placeholders count as assigned; they are never dependency targets
    return {k: (v if v is not None else "") for k, v in values.items()}


def enumerate_documents(schema: NGLSchema) -> Iterator[NGLDocument]:
    """All answer paths, each expanded so every option of every leaf attribute occurs.

    A path with leaf attributes of at most k options yields k documents; in
    document j a leaf attribute at schema position p takes option (j + p) mod n.
    """
    position = {a.id: i for i, a in enumerate(schema.attributes)}
    for path in enumerate_answer_paths(schema):
        leaves = [k for k, v in path.items() if v is None]
        width = max((len(schema.options(k)) for k in leaves), default=1)
        for j in range(width):
            values = {}
            for k, v in path.items():
                if v is None:
                    opts = schema.options(k)
                    v = opts[(j + position[k]) % len(opts)]
                values[k] = v
            yield NGLDocument(schema.version, values)


def random_document(
    schema: NGLSchema,
    rng: random.Random,
    seed: Mapping[str, str] | None = None,
    layer_index: int = 0,
) -> NGLDocument:
    values = dict(seed or {})
    while pending := applicable_attributes(schema, values):
        attr_id = pending[0]
        values[attr_id] = rng.choice(schema.options(attr_id))
    return NGLDocument(schema.version, values, layer_index)


# inner -> outer layer stacks used for synthetic multi-layer outfits
OUTFIT_STACKS = (
    ("top",), ("dress",), ("skirt",), ("pants",), ("jumpsuit",),
    ("pants", "top"), ("skirt", "top"), ("top", "top"), ("dress", "top"),
    ("pants", "top", "top"), ("skirt", "top", "top"), ("jumpsuit", "top"),
)


def random_outfit(schema: NGLSchema, rng: random.Random, n_layers: int | None = None) -> list[NGLDocument]:
    stacks = [s for s in OUTFIT_STACKS if n_layers is None or len(s) == n_layers]
    stack = rng.choice(stacks)
    return [
        random_document(schema, rng, {"garment_category": cat}, layer_index=i)
        for i, cat in enumerate(stack)
    ]


def synthetic_outfits(
    schema: NGLSchema,
    count: int,
    multi_layer: int,
    seed: int = 0,
) -> list[list[NGLDocument]]:
    """``count`` outfits, the first ``multi_layer`` of them with 2-3 layers."""
    rng = random.Random(seed)
    outfits = []
    for i in range(count):
        n = rng.choice((2, 3)) if i < multi_layer else 1
        outfits.append(random_outfit(schema, rng, n))
    return outfits
