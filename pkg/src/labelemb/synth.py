"""Template-generated slot-filling corpora.

Stand-in for licensed dialogue corpora.  The generator knows the label of
every word it emits, so its output doubles as ground truth for overfit
checks.  Outputs are BIO-valid by construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus

# concept -> (cue words that precede a filler, fillers)
CONCEPTS = {
    "fromloc": (["from", "leaving"], ["boston", "denver", "new york", "san francisco",
                                      "salt lake city", "dallas", "st louis", "atlanta"]),
    "toloc": (["to", "arriving in"], ["boston", "denver", "new york", "san francisco",
                                      "salt lake city", "dallas", "st louis", "atlanta"]),
    "date": (["on"], ["monday", "friday", "next tuesday", "july fourth",
                      "the first of may", "tomorrow", "sunday"]),
    "time": (["at", "around"], ["noon", "six pm", "early morning", "ten thirty",
                                "midnight", "late evening"]),
    "airline": (["with", "on"], ["delta", "united", "american airlines", "air canada",
                                 "lufthansa", "us air"]),
    "fare": (["in", "flying"], ["economy", "first class", "business class", "coach",
                                "premium economy"]),
    "price": (["for", "under"], ["cheap", "two hundred dollars", "five hundred dollars",
                                 "bargain", "low cost"]),
    "stops": (["with", "that is"], ["nonstop", "one stop", "direct", "two stops"]),
    "meal": (["serving", "with"], ["breakfast", "dinner", "lunch", "snacks", "a hot meal"]),
    "count": (["for"], ["one person", "two people", "three adults", "four", "a family"]),
}

OPENERS = [
    "i want a flight", "show me flights", "list flights", "please find a flight",
    "what flights are there", "i need to fly", "book a ticket", "are there any flights",
    "can you give me flights", "i would like to travel",
]
CLOSERS = ["", "", "please", "thanks", "if possible", "for me"]


@dataclass(frozen=True)
class ConceptSpec:
    name: str
    multiword: bool


def label_inventory(n_labels: int) -> tuple[list[str], list[ConceptSpec]]:
    """Exactly ``n_labels`` labels: ``O`` plus B-/I- pairs, last concept B- only if needed."""
    if n_labels < 2:
        raise ValueError("need at least two labels (O and one concept)")
    if n_labels - 1 > 2 * len(CONCEPTS):
        raise ValueError(f"at most {2 * len(CONCEPTS) + 1} labels are available")
    labels, specs = ["O"], []
    remaining = n_labels - 1
    for name in CONCEPTS:
        if remaining == 0:
            break
        multi = remaining >= 2
        labels.append(f"B-{name}")
        if multi:
            labels.append(f"I-{name}")
        specs.append(ConceptSpec(name, multi))
        remaining -= 2 if multi else 1
    return labels, specs


def _fillers(spec: ConceptSpec) -> list[list[str]]:
    fills = [f.split() for f in CONCEPTS[spec.name][1]]
    return fills if spec.multiword else [f for f in fills if len(f) == 1]


class TemplateGrammar:
    """Templates are an opener, an ordered subset of slots and a closer."""

    def __init__(self, n_labels: int, n_templates: int, seed: int):
        self.labels, self.specs = label_inventory(n_labels)
        rng = np.random.default_rng(seed)
        self.templates = []
        for t in range(n_templates):
            # Each concept is guaranteed a template so every label can occur.
            first = self.specs[t % len(self.specs)]
            others = [s for s in self.specs if s is not first]
            extra = rng.choice(len(others), size=min(len(others), int(rng.integers(0, 3))),
                               replace=False) if others else []
            slots = [first] + [others[i] for i in extra]
            slots = [slots[i] for i in rng.permutation(len(slots))]
            cues = [CONCEPTS[s.name][0][int(rng.integers(len(CONCEPTS[s.name][0])))] for s in slots]
            opener = OPENERS[int(rng.integers(len(OPENERS)))]
            closer = CLOSERS[int(rng.integers(len(CLOSERS)))]
            self.templates.append((opener, list(zip(cues, slots)), closer))

    def sample(self, rng) -> tuple[list[str], list[str]]:
        opener, slots, closer = self.templates[int(rng.integers(len(self.templates)))]
        words = opener.split()
        labels = ["O"] * len(words)
        for cue, spec in slots:
            cue_words = cue.split()
            words += cue_words
            labels += ["O"] * len(cue_words)
            options = _fillers(spec)
            filler = options[int(rng.integers(len(options)))]
            words += filler
            labels += [f"B-{spec.name}"] + [f"I-{spec.name}"] * (len(filler) - 1)
        if closer:
            words += closer.split()
            labels += ["O"] * len(closer.split())
        return words, labels


def generate(n_utterances: int, n_labels: int = 8, n_templates: int = 20, seed: int = 0) -> Corpus:
    grammar = TemplateGrammar(n_labels, n_templates, seed)
    rng = np.random.default_rng(seed + 1)
    return Corpus.from_pairs(grammar.sample(rng) for _ in range(n_utterances))


def generate_splits(n_train: int, n_dev: int, n_test: int, n_labels: int = 8,
                    n_templates: int = 20, seed: int = 0) -> tuple[Corpus, Corpus, Corpus]:
    """Train/dev/test from one grammar; train is guaranteed to use every label."""
    grammar = TemplateGrammar(n_labels, n_templates, seed)
    rng = np.random.default_rng(seed + 1)
    for _ in range(100):
        train = Corpus.from_pairs(grammar.sample(rng) for _ in range(n_train))
        used = {l for u in train for l in u.labels}
        if used == set(grammar.labels):
            break
    else:
        raise RuntimeError("could not cover every label; raise n_train or n_templates")
    dev = Corpus.from_pairs(grammar.sample(rng) for _ in range(n_dev))
    test = Corpus.from_pairs(grammar.sample(rng) for _ in range(n_test))
    return train, dev, test
