"""Synthetic toy-language suites for experiments and tests.

A suite is a made-up source language, a made-up target language with
synonyms and inflected variants, a :class:`LexiconScorer` translating
between them word by word, and sentence records with multiple references.
Target words are built as ``stem + suffix`` and the vocabulary holds
``"▁stem"`` and each suffix as pieces, so inflected forms share their first
subword with the dictionary form.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .records import SentenceRecord
from .scoring import LexiconScorer
from .text import StemmerConfig, Vocabulary, WORD_BOUNDARY, default_stemmer, default_stopwords, segment, stem

CONSONANTS = "bdklmnprstvz"
VOWELS = "aeiouy"
SOURCE_CONSONANTS = "fghjqwx"
SUFFIXES = ("a", "ou", "ového", "ovy", "u", "e")
FUNCTION_WORDS = {"and": "a", "on": "na", "is": "je", "that": "že", "with": "s"}


@dataclass
class SyntheticSuite:
    vocab: Vocabulary
    scorer: LexiconScorer
    records: list[SentenceRecord]
    lexicon: dict[str, dict[str, float]]
    stopwords: frozenset[str]
    stemmer: StemmerConfig

    def lexicon_json(self) -> dict:
        return {"type": "lexicon", "epsilon": self.scorer.epsilon, "lexicon": self.lexicon}


def _syllable(rng: random.Random, consonants: str) -> str:
    return rng.choice(consonants) + rng.choice(VOWELS)


def _make_stems(rng: random.Random, n: int, stemmer: StemmerConfig) -> list[str]:
    stems: list[str] = []
    seen: set[str] = set()
    while len(stems) < n:
        s = "".join(_syllable(rng, CONSONANTS) for _ in range(rng.randint(1, 2))) + rng.choice(CONSONANTS)
        if s in seen or any(s.startswith(o) or o.startswith(s) for o in stems):
            continue
        if stem(s, stemmer) != s or any(stem(s + suf, stemmer) != s for suf in SUFFIXES):
            continue
        seen.add(s)
        stems.append(s)
    return stems


def make_suite(
    n_sentences: int = 200,
    n_concepts: int = 40,
    seed: int = 0,
    inflections: bool = True,
    min_len: int = 3,
    max_len: int = 6,
    epsilon: float = 1e-3,
) -> SyntheticSuite:
    """Generate a reproducible toy translation suite.

    Every content concept has a dominant translation, an inflected variant
    of it (when ``inflections``), and one or two synonyms with other stems.
    References are the dominant translation plus a variant that swaps some
    words for their synonym.
    """
    rng = random.Random(seed)
    stemmer = default_stemmer()
    stopwords = default_stopwords()
    stems = _make_stems(rng, 3 * n_concepts, stemmer)
    source_words: list[str] = []
    while len(source_words) < n_concepts:
        w = "".join(_syllable(rng, SOURCE_CONSONANTS) for _ in range(rng.randint(2, 3)))
        if w not in source_words and w not in FUNCTION_WORDS:
            source_words.append(w)

    lexicon: dict[str, dict[str, float]] = {}
    synonym_of: dict[str, str] = {}
    for j, src in enumerate(source_words):
        a, b, c = stems[3 * j : 3 * j + 3]
        suf_main, suf_infl, suf_syn = rng.sample(SUFFIXES, 3)
        primary = rng.uniform(0.4, 0.85)
        rest = 1.0 - primary
        cands = {a + suf_main: primary}
        shares = [rng.uniform(0.2, 1.0) for _ in range(3 if inflections else 2)]
        total = sum(shares)
        alts = [b + suf_syn, c + suf_main] + ([a + suf_infl] if inflections else [])
        for alt, share in zip(alts, shares):
            cands[alt] = rest * share / total
        lexicon[src] = cands
        synonym_of[src] = b + suf_syn
    for src, tgt in FUNCTION_WORDS.items():
        lexicon[src] = {tgt: 1.0}

    pieces = sorted(
        {WORD_BOUNDARY + s for s in stems}
        | set(SUFFIXES)
        | {WORD_BOUNDARY + w for w in list(source_words) + list(FUNCTION_WORDS) + list(FUNCTION_WORDS.values())}
    )
    vocab = Vocabulary(pieces)
    for s in stems:
        for suf in SUFFIXES:
            ids = segment(s + suf, vocab)
            assert ids == [vocab.id_of[WORD_BOUNDARY + s], vocab.id_of[suf]], (s, suf)

    scorer = LexiconScorer(vocab, lexicon, epsilon=epsilon)
    records = []
    func = list(FUNCTION_WORDS)
    for i in range(n_sentences):
        n = rng.randint(min_len, max_len)
        words = []
        for _ in range(n):
            if words and words[-1] not in FUNCTION_WORDS and rng.random() < 0.25:
                words.append(rng.choice(func))
            else:
                words.append(rng.choice(source_words))
        best = [max(lexicon[w].items(), key=lambda kv: (kv[1], kv[0]))[0] for w in words]
        variant = [synonym_of.get(w, t) if rng.random() < 0.5 else t for w, t in zip(words, best)]
        refs = [" ".join(best)]
        if variant != best:
            refs.append(" ".join(variant))
        records.append(SentenceRecord(id=f"s{i:04d}", source=" ".join(words), references=refs))
    return SyntheticSuite(vocab, scorer, records, lexicon, stopwords, stemmer)
