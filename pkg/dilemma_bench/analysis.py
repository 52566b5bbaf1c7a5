"""
Statistical contrasts and lexical signatures of reasoning traces.
"""

import hashlib
import logging
import os
import re
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from dilemma_bench.exceptions import EmptyGroup

# Configure logging
logger = logging.getLogger(__name__)

DEFAULT_DRAWS = 10_000
MIN_DRAWS = 1000
_CHUNK = 1000


@dataclass(frozen=True)
class ContrastResult:
    median_delta: float
    p_plus: float
    draws: int
    seed: int
    label_a: str = "A"
    label_b: str = "B"
    n_a: int = 0
    n_b: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _as_array(samples: Sequence[float], label: str) -> np.ndarray:
    values = np.asarray(list(samples), dtype=float)
    if values.size == 0:
        raise EmptyGroup(f"Group {label} has no samples")
    return values


def _group_seed(seed: int, values: np.ndarray) -> List[int]:
    digest = hashlib.sha256(values.tobytes()).digest()
    return [int(seed), int.from_bytes(digest[:8], "big")]


def _dirichlet_means(values: np.ndarray, draws: int, rng: np.random.Generator) -> np.ndarray:
    # Centred on the first value so constant groups give that constant exactly.
    anchor = values[0]
    weights = rng.dirichlet(np.ones(values.size), size=draws)
    return anchor + weights @ (values - anchor)


def bayesian_bootstrap_contrast(
    samples_a: Sequence[float],
    samples_b: Sequence[float],
    draws: int = DEFAULT_DRAWS,
    seed: int = 0,
    label_a: str = "A",
    label_b: str = "B",
) -> ContrastResult:
    """
    Bayesian bootstrap of the difference in means between two groups.

    Each draw reweights every group with flat Dirichlet weights and takes
    delta = mean_A - mean_B. A group's weight stream depends only on the seed
    and the group's values, so swapping the groups negates every delta.

    Args:
        samples_a (Sequence[float]): Per-unit statistics of group A.
        samples_b (Sequence[float]): Per-unit statistics of group B.
        draws (int): Posterior draws (at least 1000).
        seed (int): Seed.
        label_a (str): Name of group A.
        label_b (str): Name of group B.

    Returns:
        ContrastResult: Median delta and P(delta > 0); ties count as not positive.

    Raises:
        EmptyGroup: If either group is empty.
        ValueError: If draws < 1000.
    """
    if draws < MIN_DRAWS:
        raise ValueError(f"At least {MIN_DRAWS} draws are required, got {draws}")
    a = _as_array(samples_a, label_a)
    b = _as_array(samples_b, label_b)

    means_a = _dirichlet_means(a, draws, np.random.default_rng(_group_seed(seed, a)))
    means_b = _dirichlet_means(b, draws, np.random.default_rng(_group_seed(seed, b)))
    deltas = means_a - means_b

    return ContrastResult(
        median_delta=float(np.median(deltas)),
        p_plus=float(np.mean(deltas > 0)),
        draws=draws,
        seed=seed,
        label_a=label_a,
        label_b=label_b,
        n_a=int(a.size),
        n_b=int(b.size),
    )


def bootstrap_ci(
    values: Sequence[float],
    level: float = 0.95,
    draws: int = DEFAULT_DRAWS,
    seed: int = 0,
) -> Tuple[float, float]:
    """
    Percentile interval of resampled means.

    Args:
        values (Sequence[float]): Observations.
        level (float): Coverage in (0, 1).
        draws (int): Resamples.
        seed (int): Seed.

    Returns:
        Tuple[float, float]: Lower and upper bound.

    Raises:
        EmptyGroup: If values is empty.
        ValueError: If level is outside (0, 1) or draws < 1.
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"Confidence level must lie in (0, 1), got {level}")
    if draws < 1:
        raise ValueError(f"draws must be positive, got {draws}")
    data = _as_array(values, "values")
    anchor = data[0]
    centred = data - anchor
    rng = np.random.default_rng(seed)

    means = np.empty(draws)
    for start in range(0, draws, _CHUNK):
        size = min(_CHUNK, draws - start)
        idx = rng.integers(0, data.size, size=(size, data.size))
        means[start:start + size] = anchor + centred[idx].mean(axis=1)

    tail = (1.0 - level) / 2.0
    low, high = np.quantile(means, [tail, 1.0 - tail])
    return float(low), float(high)


# ---------------------------------------------------------------------------
# Lexical signatures
# ---------------------------------------------------------------------------

DEFAULT_COOP_TERMS = (
    "cooperation", "cooperate", "mutual", "trust", "help", "reciprocity",
    "together", "align", "fair", "win-win", "support",
)
DEFAULT_DEFECT_TERMS = (
    "defect", "defection", "exploit", "take advantage", "betray", "betrayal",
    "trick", "selfish", "manipulate", "cheat",
)

# Words are runs of letters/digits; inner hyphens and apostrophes stay inside the word.
_TOKEN_PATTERN = re.compile(r"[a-z0-9]+(?:['\-][a-z0-9]+)*")


def tokenize(text: str) -> List[str]:
    return _TOKEN_PATTERN.findall(text.lower())


@dataclass(frozen=True)
class KeywordLexicon:
    coop_terms: Tuple[str, ...] = DEFAULT_COOP_TERMS
    defect_terms: Tuple[str, ...] = DEFAULT_DEFECT_TERMS


def load_lexicon(path: str) -> KeywordLexicon:
    """
    Read a lexicon file with [coop] and [defect] sections, one phrase per
    line. Blank lines and lines starting with '#' are ignored.

    Raises:
        FileNotFoundError: If the file does not exist.
        ValueError: On phrases outside a section or an empty section.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Lexicon file not found: {path}")
    sections: Dict[str, List[str]] = {"coop": [], "defect": []}
    current = None
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if text.startswith("[") and text.endswith("]"):
                current = text[1:-1].strip().lower()
                if current not in sections:
                    raise ValueError(f"{path}:{line_no}: unknown section [{current}]")
                continue
            if current is None:
                raise ValueError(f"{path}:{line_no}: phrase outside a section")
            sections[current].append(text.lower())
    for name, terms in sections.items():
        if not terms:
            raise ValueError(f"{path}: section [{name}] is empty")
    return KeywordLexicon(coop_terms=tuple(sections["coop"]), defect_terms=tuple(sections["defect"]))


@dataclass(frozen=True)
class LexicalSignature:
    coop_count: int
    defect_count: int
    total_words: int
    coop_per_100: float
    defect_per_100: float
    ratio: Optional[float] = None
    term_counts: Dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _count_phrase(tokens: Sequence[str], phrase: Sequence[str]) -> int:
    width = len(phrase)
    if width == 0:
        return 0
    return sum(1 for i in range(len(tokens) - width + 1) if list(tokens[i:i + width]) == list(phrase))


def lexical_signature(texts: Iterable[str], lexicon: Optional[KeywordLexicon] = None) -> LexicalSignature:
    """
    Count lexicon phrases per 100 words over a set of texts.

    Matching is whole-token and case-insensitive with no stemming; multi-word
    phrases match contiguous tokens within one text.

    Args:
        texts (Iterable[str]): Reasoning traces.
        lexicon (KeywordLexicon, optional): Phrase sets; defaults apply.

    Returns:
        LexicalSignature: Counts, rates and the coop/defect ratio (None when
        no defect term occurs).

    Raises:
        ValueError: If texts is empty.
    """
    texts = list(texts)
    if not texts:
        raise ValueError("Lexical signature needs at least one text")
    lexicon = lexicon or KeywordLexicon()
    coop_phrases = [tokenize(t) for t in lexicon.coop_terms]
    defect_phrases = [tokenize(t) for t in lexicon.defect_terms]

    total = 0
    term_counts: Dict[str, int] = {t: 0 for t in (*lexicon.coop_terms, *lexicon.defect_terms)}
    for text in texts:
        tokens = tokenize(text)
        total += len(tokens)
        for term, phrase in zip(lexicon.coop_terms, coop_phrases):
            term_counts[term] += _count_phrase(tokens, phrase)
        for term, phrase in zip(lexicon.defect_terms, defect_phrases):
            term_counts[term] += _count_phrase(tokens, phrase)

    coop = sum(term_counts[t] for t in lexicon.coop_terms)
    defect = sum(term_counts[t] for t in lexicon.defect_terms)
    coop_rate = 100.0 * coop / total if total else 0.0
    defect_rate = 100.0 * defect / total if total else 0.0
    return LexicalSignature(
        coop_count=coop,
        defect_count=defect,
        total_words=total,
        coop_per_100=coop_rate,
        defect_per_100=defect_rate,
        ratio=coop_rate / defect_rate if defect_rate > 0 else None,
        term_counts=term_counts,
    )


SOURCE_REASONING = "reasoning"
SOURCE_THINK = "think_trace"
SOURCE_COMBINED = "combined"


def lexical_by_source(
    traces: Iterable[Mapping[str, Any]],
    lexicon: Optional[KeywordLexicon] = None,
) -> Dict[str, LexicalSignature]:
    """
    Lexical signatures of JSON reasoning fields, think traces and both.

    Args:
        traces (Iterable[Mapping]): Decision traces with optional "reasoning"
            and "think_trace" keys.
        lexicon (KeywordLexicon, optional): Phrase sets.

    Returns:
        Dict[str, LexicalSignature]: Keyed by source; sources without any
        text are omitted.
    """
    reasoning, think = [], []
    for trace in traces:
        if trace.get("reasoning"):
            reasoning.append(trace["reasoning"])
        if trace.get("think_trace"):
            think.append(trace["think_trace"])

    results = {}
    if reasoning:
        results[SOURCE_REASONING] = lexical_signature(reasoning, lexicon)
    if think:
        results[SOURCE_THINK] = lexical_signature(think, lexicon)
    if reasoning or think:
        results[SOURCE_COMBINED] = lexical_signature(reasoning + think, lexicon)
    return results
