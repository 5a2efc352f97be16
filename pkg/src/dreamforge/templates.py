"""Prompt templates for the LLM-backed steps.

Templates are versioned text assets: the version string is recorded in run
manifests so a vocabulary or layout produced under one wording is never
silently mixed with another. Stub providers dispatch on the first line of
each template, so edit headers with care.
"""

TEMPLATE_VERSION = "1"

ASSOCIATION_HEADER = "List object categories that commonly appear together with the source category."
COARSE_LAYOUT_HEADER = "Describe a plausible single-image scene containing the listed classes."
INDUCTION_HEADER = "Convert the scene description into a strict JSON layout."


def association_prompt(class_name: str) -> str:
    return (
        f"{ASSOCIATION_HEADER}\n"
        f"Source category: {class_name}\n"
        "Answer with a comma-separated list of singular English nouns, nothing else."
    )


def coarse_layout_prompt(class_names: list[str]) -> str:
    return (
        f"{COARSE_LAYOUT_HEADER}\n"
        f"Classes: {', '.join(class_names)}\n"
        "Answer with one or two sentences of plain prose."
    )


def induction_prompt(description: str, class_names: list[str], attempt: int) -> str:
    return (
        f"{INDUCTION_HEADER}\n"
        f"Classes: {', '.join(class_names)}\n"
        f"Scene: {description}\n"
        f"Attempt: {attempt}\n"
        'Answer with JSON of the form {"objects": [{"class": <name>, '
        '"box": [x, y, w, h]}]} where coordinates are fractions of the '
        "canvas in [0, 1]. No other text."
    )
