"""Prompt-noun to detector-vocabulary matching.

Prompts carry noun phrases ("a potted plant", "The TV"); detectors publish
class names ("potted plant", "tv"). Matching happens on a normalized form:
lowercase, leading articles stripped, whitespace collapsed. A small synonym
table shipped as data maps normalized nouns onto class names.
"""

from __future__ import annotations

import json
from importlib import resources

ARTICLES = ("a", "an", "the")


def normalize(label: str) -> str:
    words = label.lower().split()
    while words and words[0] in ARTICLES:
        words = words[1:]
    return " ".join(words)


def load_label_map() -> dict[str, str]:
    text = resources.files("detector_adapter").joinpath(
        "data/label_map.json").read_text("utf-8")
    return json.loads(text)


def to_vocabulary(label: str, table: dict[str, str] | None = None) -> str:
    """Detector class name for a prompt noun; unmapped nouns pass through."""
    if table is None:
        table = load_label_map()
    norm = normalize(label)
    return table.get(norm, norm)
