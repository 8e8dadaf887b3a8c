"""Deterministic synthetic corpora for demos and offline pipeline runs.

Positives share tokens with their candidate and negatives mostly do not, so
the token-overlap mock scorer produces a meaningful probability spread and
threshold calibration has a real optimum to find.
"""

from __future__ import annotations

import random

from .corpus import RelevanceRecord, Task, make_record
from .hashing import derive_seed

_TOP = [
    "Electronics", "Home", "Sports", "Beauty", "Toys",
    "Automotive", "Fashion", "Office", "Pets", "Grocery",
]
_MID = [
    "Audio Devices", "Kitchen Tools", "Outdoor Gear", "Skin Care",
    "Building Sets", "Car Care", "Menswear", "Stationery",
    "Dog Supplies", "Snacks", "Lighting", "Fitness Equipment",
]
_LEAF = [
    "Headphones", "Blenders", "Tents", "Moisturizers", "Bricks",
    "Wax Kits", "Jackets", "Notebooks", "Chew Toys", "Crackers",
    "Desk Lamps", "Dumbbells", "Speakers", "Kettles", "Backpacks",
    "Serums", "Drones", "Polish", "Scarves", "Markers",
]
_BRANDS = ["acme", "zenio", "nordica", "kavu", "luxor", "orbit", "prima", "vela"]
_ADJS = ["wireless", "compact", "waterproof", "organic", "foldable", "ergonomic", "premium", "portable"]
_NOUNS = ["headphones", "blender", "tent", "serum", "bricks", "wax", "jacket", "notebook",
          "toy", "crackers", "lamp", "dumbbell", "speaker", "kettle", "backpack", "marker"]
_EXTRAS = ["pro", "max", "mini", "set", "pack", "kit", "edition", "series"]


def catalog_texts(task: Task, size: int, seed: int) -> list[str]:
    """Distinct candidate texts: category paths for QC, item titles for QI."""
    rng = random.Random(derive_seed(seed, "catalog", task.value))
    texts: list[str] = []
    seen: set[str] = set()
    while len(texts) < size:
        if task is Task.QC:
            text = " > ".join(
                (rng.choice(_TOP), rng.choice(_MID), rng.choice(_LEAF))
            )
        else:
            text = " ".join(
                (
                    rng.choice(_BRANDS),
                    rng.choice(_ADJS),
                    rng.choice(_NOUNS),
                    rng.choice(_EXTRAS),
                    str(rng.randint(1, 99)),
                )
            )
        if text not in seen:
            seen.add(text)
            texts.append(text)
    return texts


def _query_tokens(candidate: str, positive: bool, language: str, rng: random.Random) -> str:
    cand_tokens = [t for t in candidate.lower().split() if t != ">"]
    if positive:
        take = rng.randint(2, min(3, len(cand_tokens)))
        tokens = rng.sample(cand_tokens, take)
        for _ in range(rng.randint(0, 1)):
            tokens.append(f"{language}{rng.randint(1, 40)}")
    else:
        tokens = [f"{language}{rng.randint(1, 40)}" for _ in range(rng.randint(2, 4))]
        if rng.random() < 0.3:
            tokens.append(rng.choice(cand_tokens))
    rng.shuffle(tokens)
    return " ".join(tokens)


def synthetic_corpus(
    task: Task,
    counts: dict[str, int],
    seed: int,
    catalog: list[str] | None = None,
    positive_ratio: float = 0.6,
    flip_fraction: float = 0.0,
) -> list[RelevanceRecord]:
    """Labeled records per language; ``flip_fraction`` injects label noise."""
    if catalog is None:
        catalog = catalog_texts(task, 200, seed)
    records: list[RelevanceRecord] = []
    for language in sorted(counts):
        rng = random.Random(derive_seed(seed, "corpus", task.value, language))
        for i in range(counts[language]):
            candidate = rng.choice(catalog)
            positive = rng.random() < positive_ratio
            query = f"{_query_tokens(candidate, positive, language, rng)} {language}q{i}"
            label = 1 if positive else 0
            if flip_fraction and rng.random() < flip_fraction:
                label = 1 - label
            records.append(
                make_record(
                    task=task,
                    query=query,
                    language=language,
                    candidate=candidate,
                    label=label,
                )
            )
    return records
