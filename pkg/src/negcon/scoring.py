"""Scorers consumed by the decoder and the learned-constraint input format.

A scorer is any object with a ``vocab`` attribute and a
``score_step(source, prefix)`` method returning a log-probability vector
over the vocabulary. The ones shipped here are deterministic toy models
for tests and experiments; none of them is a neural translation model.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter, defaultdict
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence, runtime_checkable

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .constraints import (
    ConstraintSet,
    extract_refinement_constraints,
    stem_constraints,
)
from .decoder import DecodeConfig, decode
from .text import SEP, CSEP, StemmerConfig, Vocabulary, detokenize, segment

logger = logging.getLogger(__name__)


@runtime_checkable
class Scorer(Protocol):
    vocab: Vocabulary

    def score_step(self, source: Sequence[int], prefix: Sequence[int]) -> np.ndarray: ...


def _log_normalize(probs: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        logp = np.log(probs)
    return logp - logsumexp(logp)


class TabularScorer:
    """Explicit next-token distributions keyed by (source, recent prefix).

    ``table`` maps ``(source_ids, context_ids)`` to ``{token_id: prob}``.
    ``context_ids`` is the last ``context_len`` prefix tokens (the whole
    prefix when ``context_len`` is None); ``source_ids`` may be ``"*"`` to
    match any source. Probability mass left unassigned by an entry is spread
    evenly over the ids it does not mention. Unseen contexts get a uniform
    distribution.
    """

    WILDCARD = "*"

    def __init__(self, vocab: Vocabulary, table: Mapping, context_len: int | None = None) -> None:
        if context_len is not None and context_len < 0:
            raise ValueError("context_len must be >= 0")
        self.vocab = vocab
        self.context_len = context_len
        self._table: dict[tuple, np.ndarray] = {}
        for (src, ctx), dist in table.items():
            src_key = src if src == self.WILDCARD else tuple(src)
            self._table[(src_key, tuple(ctx))] = self._dense(dist)
        self._uniform = np.full(len(vocab), -math.log(len(vocab)))

    def _dense(self, dist: Mapping[int, float]) -> np.ndarray:
        n = len(self.vocab)
        probs = np.zeros(n)
        for tok, p in dist.items():
            if not 0 <= int(tok) < n:
                raise ValueError(f"token id {tok} outside the vocabulary")
            if p < 0:
                raise ValueError("negative probability")
            probs[int(tok)] += p
        total = probs.sum()
        if total > 1 + 1e-9:
            raise ValueError(f"distribution sums to {total} > 1")
        rest = n - len(dist)
        if total < 1 - 1e-12:
            if rest:
                unset = np.ones(n, dtype=bool)
                unset[[int(t) for t in dist]] = False
                probs[unset] = (1 - total) / rest
            elif total == 0:
                raise ValueError("empty distribution")
        return _log_normalize(probs)

    def _context(self, prefix: Sequence[int]) -> tuple[int, ...]:
        if self.context_len is None:
            return tuple(prefix)
        if self.context_len == 0:
            return ()
        return tuple(prefix[-self.context_len :])

    def score_step(self, source: Sequence[int], prefix: Sequence[int]) -> np.ndarray:
        ctx = self._context(prefix)
        row = self._table.get((tuple(source), ctx))
        if row is None:
            row = self._table.get((self.WILDCARD, ctx))
        return (row if row is not None else self._uniform).copy()

    @classmethod
    def from_json(cls, path: str | Path, vocab: Vocabulary, context_len: int | None = None) -> "TabularScorer":
        """Load ``{"source||prefix": {piece: prob}}`` with space-separated pieces."""
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if isinstance(raw, dict) and "table" in raw:
            context_len = raw.get("context_len", context_len)
            raw = raw["table"]
        return cls(vocab, cls._parse_table(raw, vocab), context_len)

    @staticmethod
    def _parse_table(raw: Mapping[str, Mapping[str, float]], vocab: Vocabulary) -> dict:
        def ids(text: str) -> tuple[int, ...]:
            return tuple(vocab.id_of[p] for p in text.split())

        table = {}
        for key, dist in raw.items():
            src, _, ctx = key.partition("||")
            src_key = TabularScorer.WILDCARD if src.strip() == TabularScorer.WILDCARD else ids(src)
            table[(src_key, ids(ctx))] = {vocab.id_of[p]: float(v) for p, v in dist.items()}
        return table

    def to_json(self, path: str | Path) -> None:
        out = {}
        for (src, ctx), row in self._table.items():
            src_text = src if src == self.WILDCARD else " ".join(self.vocab[i] for i in src)
            probs = np.exp(row)
            dist = {self.vocab[i]: float(probs[i]) for i in np.flatnonzero(probs > 0)}
            out[f"{src_text}||{' '.join(self.vocab[i] for i in ctx)}"] = dist
        payload = {"context_len": self.context_len, "table": out}
        Path(path).write_text(json.dumps(payload, ensure_ascii=False, indent=1), encoding="utf-8")


class NgramScorer(BaseEstimator):
    """Add-alpha smoothed n-gram model over target subwords.

    With ``source_context`` the model reads the stream
    ``source <sep> target`` so the first target tokens depend on the end of
    the source; otherwise the source is ignored.
    """

    def __init__(self, vocab=None, order=3, alpha=0.1, source_context=True):
        self.vocab = vocab
        self.order = order
        self.alpha = alpha
        self.source_context = source_context

    def _stream(self, source: Sequence[int], target: Sequence[int]) -> list[int]:
        pad = [self.vocab.bos] * (self.order - 1)
        src = list(source) + [self.vocab.sep] if self.source_context else []
        return pad + src + list(target)

    def fit(self, X, y=None):
        """X: target id sequences, or (source ids, target ids) pairs."""
        if self.vocab is None:
            raise ValueError("vocab is required")
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        counts: dict[tuple[int, ...], Counter] = defaultdict(Counter)
        for item in X:
            if isinstance(item, tuple) and len(item) == 2 and not isinstance(item[0], int):
                source, target = item
            else:
                source, target = (), item
            target = list(target) + [self.vocab.eos]
            stream = self._stream(source, [])
            for tok in target:
                counts[tuple(stream[len(stream) - self.order + 1 :]) if self.order > 1 else ()][tok] += 1
                stream.append(tok)
        self._row_cache = {}
        self.counts_ = dict(counts)
        self.context_totals_ = {ctx: sum(c.values()) for ctx, c in counts.items()}
        return self

    def prob(self, token: int, context: Sequence[int]) -> float:
        check_is_fitted(self, "counts_")
        ctx = tuple(context)
        c = self.counts_.get(ctx, {})
        return (c.get(token, 0) + self.alpha) / (self.context_totals_.get(ctx, 0) + self.alpha * len(self.vocab))

    def score_step(self, source: Sequence[int], prefix: Sequence[int]) -> np.ndarray:
        check_is_fitted(self, "counts_")
        stream = self._stream(source, prefix)
        ctx = tuple(stream[len(stream) - self.order + 1 :]) if self.order > 1 else ()
        return self._row(ctx).copy()

    def _row(self, ctx: tuple[int, ...]) -> np.ndarray:
        cache = self._row_cache
        row = cache.get(ctx)
        if row is None:
            n = len(self.vocab)
            probs = np.full(n, self.alpha)
            for tok, cnt in self.counts_.get(ctx, {}).items():
                probs[tok] += cnt
            row = np.log(probs / (self.context_totals_.get(ctx, 0) + self.alpha * n))
            cache[ctx] = row
        return row


class LexiconScorer:
    """Toy word-for-word translation model.

    Each source word maps to weighted target-word candidates. The target is
    produced monotonically, one word per source word, then EOS. Word
    boundaries in the prefix are read off the word-initial markers; the
    subword distribution follows the candidates' segmentations. A small
    ``epsilon`` of uniform mass keeps every entry finite. Source words
    absent from the lexicon are copied.
    """

    def __init__(self, vocab: Vocabulary, lexicon: Mapping[str, Mapping[str, float]], epsilon: float = 1e-3) -> None:
        if not 0 < epsilon < 1:
            raise ValueError("epsilon must be in (0, 1)")
        self.vocab = vocab
        self.epsilon = epsilon
        self.lexicon = {}
        for word, cands in lexicon.items():
            total = sum(cands.values())
            self.lexicon[word] = {w: p / total for w, p in cands.items() if p > 0}
        self._start_cache: dict[str, dict[int, float]] = {}
        self._trie_cache: dict[str, dict[tuple[int, ...], tuple[float, float, dict[int, float]]]] = {}

    def _candidates(self, word: str) -> dict[tuple[int, ...], float]:
        cands = self.lexicon.get(word, {word: 1.0})
        out: dict[tuple[int, ...], float] = defaultdict(float)
        for w, p in cands.items():
            out[tuple(segment(w, self.vocab))] += p
        return out

    def _trie(self, word: str):
        """prefix -> (mass through prefix, mass ending at prefix, {next piece: mass})."""
        trie = self._trie_cache.get(word)
        if trie is None:
            through: dict[tuple[int, ...], float] = defaultdict(float)
            ends: dict[tuple[int, ...], float] = defaultdict(float)
            nxt: dict[tuple[int, ...], dict[int, float]] = defaultdict(lambda: defaultdict(float))
            for seq, p in self._candidates(word).items():
                ends[seq] += p
                for i in range(len(seq) + 1):
                    through[seq[:i]] += p
                    if i < len(seq):
                        nxt[seq[:i]][seq[i]] += p
            trie = {k: (through[k], ends.get(k, 0.0), dict(nxt.get(k, {}))) for k in through}
            self._trie_cache[word] = trie
        return trie

    def _source_words(self, source: Sequence[int]) -> tuple[str, ...]:
        src = list(source)
        if self.vocab.sep in src:
            src = src[: src.index(self.vocab.sep)]
        return tuple(detokenize(src, self.vocab).split())

    def _start(self, words: tuple[str, ...], i: int) -> dict[int, float]:
        if i >= len(words):
            return {self.vocab.eos: 1.0}
        return dict(self._trie(words[i])[()][2])

    def score_step(self, source: Sequence[int], prefix: Sequence[int]) -> np.ndarray:
        return self._score(tuple(source), tuple(prefix)).copy()

    @lru_cache(maxsize=65536)
    def _score(self, source: tuple[int, ...], prefix: tuple[int, ...]) -> np.ndarray:
        words = self._source_words(source)
        vocab = self.vocab
        groups: list[list[int]] = []
        for tok in prefix:
            if vocab.is_word_initial(tok) or not groups:
                groups.append([tok])
            else:
                groups[-1].append(tok)
        if not groups:
            dist = self._start(words, 0)
        else:
            i = len(groups) - 1
            if i >= len(words) or prefix[-1] == vocab.eos:
                dist = {vocab.eos: 1.0}
            else:
                node = self._trie(words[i]).get(tuple(groups[-1]))
                if node is None:
                    dist = self._start(words, i + 1)
                else:
                    through, end, children = node
                    dist = {tok: m / through for tok, m in children.items()}
                    if end:
                        for tok, p in self._start(words, i + 1).items():
                            dist[tok] = dist.get(tok, 0.0) + p * end / through
        probs = np.full(len(vocab), self.epsilon / len(vocab))
        for tok, p in dist.items():
            probs[tok] += (1 - self.epsilon) * p
        return _log_normalize(probs)


def parse_constraints_from_source(source: Sequence[int], vocab: Vocabulary) -> tuple[list[int], list[list[int]]]:
    src = list(source)
    if vocab.sep not in src:
        return src, []
    cut = src.index(vocab.sep)
    groups: list[list[int]] = [[]]
    for tok in src[cut + 1 :]:
        if tok == vocab.csep:
            groups.append([])
        else:
            groups[-1].append(tok)
    return src[:cut], [g for g in groups if g]


class EmulatedLearnedScorer:
    """Plumbing stand-in for a model trained on constraint-annotated input.

    NOT a trained model. It parses the constraints appended after ``<sep>``
    in the source, scores the bare source with ``base`` and lowers every
    subword of those constraints by ``penalty`` before renormalizing. It
    exists so the learned-constraint pipeline can run end to end.
    """

    def __init__(self, base, penalty: float = 3.0) -> None:
        if penalty < 0:
            raise ValueError("penalty must be non-negative")
        self.base = base
        self.vocab = base.vocab
        self.penalty = penalty

    def score_step(self, source: Sequence[int], prefix: Sequence[int]) -> np.ndarray:
        bare, groups = parse_constraints_from_source(source, self.vocab)
        logp = np.asarray(self.base.score_step(bare, prefix), dtype=float).copy()
        ids = sorted({t for g in groups for t in g})
        if ids and self.penalty:
            logp[ids] -= self.penalty
            logp = logp - logsumexp(logp)
        return logp


class ConstraintContainsMarker(ValueError):
    pass


def _surfaces(cs) -> list[str]:
    if isinstance(cs, ConstraintSet):
        return cs.surfaces
    return [str(c) for c in cs]


def format_learned_input(source: str, cs, sep_token: str = SEP, csep_token: str = CSEP) -> str:
    """``source <sep> c1 <c> c2 ...``; the bare source when there are no constraints."""
    if sep_token in source or csep_token in source:
        raise ConstraintContainsMarker(f"source contains a reserved marker: {source!r}")
    surfaces = _surfaces(cs)
    for s in surfaces:
        if sep_token in s or csep_token in s:
            raise ConstraintContainsMarker(f"constraint contains a reserved marker: {s!r}")
        if not s:
            raise ValueError("empty constraint surface")
    if not surfaces:
        return source
    return f"{source} {sep_token} " + f" {csep_token} ".join(surfaces)


def parse_learned_input(line: str, sep_token: str = SEP, csep_token: str = CSEP) -> tuple[str, list[str]]:
    source, found, rest = line.partition(f" {sep_token} ")
    if not found:
        return line, []
    return source, rest.split(f" {csep_token} ")


class LearnedInputFormatter(TransformerMixin, BaseEstimator):
    """Transformer turning (source, constraints) pairs into annotated input lines."""

    def __init__(self, sep_token=SEP, csep_token=CSEP):
        self.sep_token = sep_token
        self.csep_token = csep_token

    def fit(self, X=None, y=None):
        if self.sep_token == self.csep_token:
            raise ValueError("sep_token and csep_token must differ")
        return self

    def transform(self, X):
        return [format_learned_input(src, cs, self.sep_token, self.csep_token) for src, cs in X]

    def inverse_transform(self, X):
        return [parse_learned_input(line, self.sep_token, self.csep_token) for line in X]


def generate_synthetic_training_data(
    corpus: Sequence[tuple[str, str]],
    base_scorer,
    decode_cfg: DecodeConfig,
    stopwords: Iterable[str],
    stem_cfg: StemmerConfig | None = None,
    max_constraints: int | None = None,
) -> list[str]:
    """One annotated source line per (source, reference) pair.

    Constraints are the content tokens of the unconstrained translation that
    the reference does not contain. A pair whose processing fails is logged
    and emitted as its bare source, so line counts always match.
    """
    if not corpus:
        raise ValueError("corpus must not be empty")
    vocab = base_scorer.vocab
    stopwords = list(stopwords)
    lines = []
    for n, (source, reference) in enumerate(corpus):
        try:
            hyp = decode(segment(source, vocab), base_scorer, decode_cfg)[0]
            cs = extract_refinement_constraints(detokenize(hyp.tokens, vocab), [reference], stopwords, vocab)
            if stem_cfg is not None:
                cs = stem_constraints(cs, stem_cfg, vocab)
            if max_constraints is not None:
                cs = ConstraintSet(cs.constraints[:max_constraints])
            lines.append(format_learned_input(source, cs))
        except Exception:  # noqa: BLE001 - a bad pair must not abort the batch
            logger.exception("failed to generate training line %d", n)
            lines.append(source)
    return lines
