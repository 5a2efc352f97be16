"""Vocabulary expansion: repeated LLM association, consensus, dedup.

Training-category names are sent to the LLM once per (run, class); names
seen in at least `min_hits` distinct runs survive consensus. Survivors are
then screened against the training set three ways (exact name match, the
noun filter, embedding cosine against every training category) before
being appended to the vocabulary as novel categories with fresh ids.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import templates
from .datamodel import Category, Origin, Vocabulary
from .errors import ProviderError, StageFailure
from .hashing import stable_uint64

# Local fallback part-of-speech screen: association outputs that are common
# verbs/adjectives rather than object nouns. Checked against the canonical
# lowercase form.
NON_NOUN_WORDS = frozenset(
    {
        "running", "walking", "driving", "sitting", "riding", "flying",
        "sailing", "growing", "purring", "jumping", "swimming", "eating",
        "sleeping", "standing", "moving", "cozy", "shiny", "fluffy",
        "furry", "red", "blue", "green", "small", "large", "bright",
        "wooden", "metallic", "soft", "colorful", "shade",
    }
)


def canonicalize(name: str) -> str:
    """Lowercase, trim and collapse internal whitespace."""
    return " ".join(name.lower().split())


def parse_name_list(text: str) -> list[str]:
    """Split an LLM answer into canonical names, preserving first-seen order."""
    seen = []
    for chunk in text.replace("\n", ",").split(","):
        name = canonicalize(chunk).strip(".;:")
        if name and name not in seen:
            seen.append(name)
    return seen


def is_noun(name: str) -> bool:
    return canonicalize(name) not in NON_NOUN_WORDS


@dataclass(frozen=True)
class CandidateName:
    name: str
    source_class: int
    run_hits: frozenset[int]
    embedding: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "run_hits", frozenset(self.run_hits))


@dataclass(frozen=True)
class DropRecord:
    name: str
    reason: str
    detail: str = ""


@dataclass
class ExpansionOutcome:
    candidates: list[CandidateName]
    failed_runs: list[int]


def expand_vocabulary(vocab: Vocabulary, providers, k_runs: int, seed: int) -> ExpansionOutcome:
    """Query the LLM `k_runs` times per training class and collect candidates.

    A run in which any class query fails (after provider-level retries) is
    recorded and excluded wholesale; fewer than two surviving runs is a
    stage failure because consensus would be meaningless.
    """
    train = vocab.train_categories
    if not train:
        raise StageFailure("vocabulary expansion needs at least one training category")
    if k_runs < 1:
        raise ValueError("k_runs must be >= 1")

    hits: dict[str, dict] = {}
    failed_runs: list[int] = []
    for run in range(1, k_runs + 1):
        run_names: list[tuple[str, int]] = []
        try:
            for category in train:
                prompt = templates.association_prompt(category.name)
                call_seed = stable_uint64("cna-run", seed, run, category.name) % 2**31
                text = providers.llm_complete(prompt, call_seed)
                for name in parse_name_list(text):
                    run_names.append((name, category.id))
        except ProviderError:
            failed_runs.append(run)
            continue
        for name, source in run_names:
            entry = hits.setdefault(name, {"source": source, "runs": set()})
            entry["runs"].add(run)

    if k_runs - len(failed_runs) < 2:
        raise StageFailure(
            f"only {k_runs - len(failed_runs)} of {k_runs} association runs "
            "succeeded; need at least 2 for consensus"
        )
    candidates = [
        CandidateName(name=name, source_class=entry["source"], run_hits=frozenset(entry["runs"]))
        for name, entry in sorted(hits.items())
    ]
    return ExpansionOutcome(candidates=candidates, failed_runs=failed_runs)


def consensus_filter(candidates, min_hits: int) -> list[CandidateName]:
    """Keep exactly the names seen in at least `min_hits` distinct runs."""
    if min_hits < 2:
        raise ValueError("min_hits must be >= 2: a repeated name needs two sightings")
    return [c for c in candidates if len(c.run_hits) >= min_hits]


def semantic_dedup(
    candidates,
    vocab: Vocabulary,
    providers,
    tau_dedup: float = 0.90,
) -> tuple[Vocabulary, list[DropRecord]]:
    """Append surviving candidates to `vocab` as novel categories.

    Drops, in order of the cheapest check first: exact matches of training
    names, non-nouns per the fallback word list, and names whose embedding
    cosine against any training category reaches `tau_dedup`. Candidates
    whose embedding cannot be computed are dropped with a warning record
    rather than silently kept.
    """
    if not (0.0 < tau_dedup < 1.0):
        raise ValueError("tau_dedup must lie in (0, 1)")
    train_names = {canonicalize(c.name) for c in vocab.categories}
    train_vectors: list[tuple[str, np.ndarray]] = [
        (c.name, providers.embed_text(c.name)) for c in vocab.train_categories
    ]

    survivors: list[CandidateName] = []
    drops: list[DropRecord] = []
    for cand in candidates:
        name = canonicalize(cand.name)
        if name in train_names:
            drops.append(DropRecord(name, "exact-match", "name already in vocabulary"))
            continue
        if not is_noun(name):
            drops.append(DropRecord(name, "non-noun", "rejected by part-of-speech screen"))
            continue
        try:
            vec = providers.embed_text(name)
        except ProviderError as exc:
            drops.append(DropRecord(name, "embedding-failure", str(exc)))
            continue
        best_name, best_cos = "", -1.0
        for train_name, train_vec in train_vectors:
            cos = float(np.dot(vec, train_vec))
            if cos > best_cos:
                best_name, best_cos = train_name, cos
        if best_cos >= tau_dedup:
            drops.append(
                DropRecord(name, "semantic-duplicate", f"cosine {best_cos:.4f} to {best_name!r}")
            )
            continue
        survivors.append(replace(cand, embedding=vec))

    next_id = vocab.next_id()
    novel = tuple(
        Category(next_id + i, c.name, Origin.NOVEL)
        for i, c in enumerate(sorted(survivors, key=lambda c: c.name))
    )
    return Vocabulary(vocab.categories + novel), drops
