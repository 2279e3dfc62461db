"""Beam search with negative lexical constraints.

Four mechanisms are supported on top of plain beam search:

* ``FILTER_SUBWORD``: drop an expansion whose token is any constrained
  subword and whose log probability is below the threshold.
* ``FILTER_MULTISUBWORD``: drop an expansion that completes a whole
  constraint whose summed log probability is below the threshold.
* ``PENALTY_SUBWORD``: subtract a fixed penalty from every constrained
  subword at every step.
* ``PENALTY_WHOLETOKEN``: subtract the penalty only from ids that would
  complete a constraint given the hypothesis' trie cursor.

Penalties are applied to normalized log probabilities. Ties are broken by
lexicographic token order so that results are reproducible.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .constraints import (
    ConstraintSet,
    ConstraintTrie,
    TrieCursor,
    advance_cursor,
    build_trie,
    penalized_vocab_ids,
)
from .text import detokenize, segment


class Method(str, enum.Enum):
    NONE = "none"
    FILTER_SUBWORD = "filter_subword"
    FILTER_MULTISUBWORD = "filter_multisubword"
    PENALTY_SUBWORD = "penalty_subword"
    PENALTY_WHOLETOKEN = "penalty_wholetoken"

    @classmethod
    def parse(cls, value: "str | Method") -> "Method":
        if isinstance(value, Method):
            return value
        key = str(value).strip().lower().replace("-", "_")
        for m in cls:
            if key in (m.value, m.name.lower()):
                return m
        raise ValueError(f"unknown method {value!r}; expected one of {[m.value for m in cls]}")

    @property
    def is_filter(self) -> bool:
        return self in (Method.FILTER_SUBWORD, Method.FILTER_MULTISUBWORD)

    @property
    def is_penalty(self) -> bool:
        return self in (Method.PENALTY_SUBWORD, Method.PENALTY_WHOLETOKEN)

    @property
    def uses_trie(self) -> bool:
        return self in (Method.FILTER_MULTISUBWORD, Method.PENALTY_WHOLETOKEN)


class EmptySource(ValueError):
    pass


@dataclass(frozen=True)
class DecodeConfig:
    beam_size: int = 5
    max_len: int = 50
    method: Method = Method.NONE
    penalty: float = 0.0
    threshold: float = -math.inf
    length_norm: bool = False
    boundary_aware: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", Method.parse(self.method))
        if int(self.beam_size) < 1:
            raise ValueError("beam_size must be >= 1")
        if int(self.max_len) < 1:
            raise ValueError("max_len must be >= 1")
        if not self.penalty >= 0:
            raise ValueError("penalty must be non-negative")
        if not self.threshold <= 0:
            raise ValueError("threshold must be <= 0 or -inf")

    @property
    def control_value(self) -> float:
        return self.penalty if self.method.is_penalty else self.threshold


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[int, ...]
    step_logprobs: tuple[float, ...]
    model_logprobs: tuple[float, ...]
    cum_score: float
    cursor: TrieCursor | None = None
    finished: bool = False
    constraint_violated: bool = False

    def score(self, length_norm: bool = False) -> float:
        if length_norm and self.tokens:
            return self.cum_score / len(self.tokens)
        return self.cum_score


class Expansion(NamedTuple):
    token: int
    logprob: float
    completions: tuple[tuple[int, float], ...] = ()


def apply_penalty_subword(logits: np.ndarray, cs: ConstraintSet, penalty: float) -> np.ndarray:
    out = np.array(logits, dtype=float, copy=True)
    if penalty and cs.flat_subword_ids:
        out[sorted(cs.flat_subword_ids)] -= penalty
    return out


def apply_penalty_wholetoken(logits: np.ndarray, cursor: TrieCursor, penalty: float) -> np.ndarray:
    out = np.array(logits, dtype=float, copy=True)
    if penalty:
        ids = penalized_vocab_ids(cursor)
        if ids:
            out[sorted(ids)] -= penalty
    return out


def subword_filter_removes(token: int, logprob: float, flat_ids: frozenset[int], threshold: float) -> bool:
    return token in flat_ids and logprob < threshold


def multisubword_filter_removes(completions: Sequence[tuple[int, float]], threshold: float) -> bool:
    return any(score < threshold for _, score in completions)


def apply_filter_subword(expansions: Sequence[Expansion], cs: ConstraintSet, threshold: float) -> list[Expansion]:
    flat = cs.flat_subword_ids
    return [e for e in expansions if not subword_filter_removes(e.token, e.logprob, flat, threshold)]


def apply_filter_multisubword(expansions: Sequence[Expansion], threshold: float) -> list[Expansion]:
    return [e for e in expansions if not multisubword_filter_removes(e.completions, threshold)]


def _adjusted(model: np.ndarray, hyp: Hypothesis, cs: ConstraintSet, cfg: DecodeConfig) -> np.ndarray:
    if cfg.method is Method.PENALTY_SUBWORD:
        return apply_penalty_subword(model, cs, cfg.penalty)
    if cfg.method is Method.PENALTY_WHOLETOKEN:
        return apply_penalty_wholetoken(model, hyp.cursor, cfg.penalty)
    return model


def _rank_key(h: Hypothesis) -> tuple:
    return (-h.cum_score, h.tokens)


def decode(
    source: Sequence[int],
    scorer,
    cfg: DecodeConfig,
    cs: ConstraintSet | None = None,
    trie: ConstraintTrie | None = None,
    require_source: bool = False,
) -> list[Hypothesis]:
    """Beam search; returns finished hypotheses, best first.

    If filtering removes every expansion before any hypothesis finished, the
    search continues from the best removed expansions, which are flagged
    ``constraint_violated``.
    """
    if require_source and not source:
        raise EmptySource("empty source")
    vocab = scorer.vocab
    cs = cs if cs is not None else ConstraintSet()
    method = cfg.method if cs else Method.NONE
    if method.uses_trie and trie is None:
        trie = build_trie(cs, vocab.word_initial_ids() if cfg.boundary_aware else None)
    banned = np.zeros(len(vocab), dtype=bool)
    banned[[vocab.bos, vocab.sep, vocab.csep]] = True
    flat = cs.flat_subword_ids
    k = cfg.beam_size
    source = list(source)

    beam = [Hypothesis((), (), (), 0.0, trie.start_cursor() if method.uses_trie else None)]
    finished: list[Hypothesis] = []
    for _ in range(cfg.max_len):
        kept: list[Hypothesis] = []
        removed: list[Hypothesis] = []
        for hyp in beam:
            model = np.asarray(scorer.score_step(source, list(hyp.tokens)), dtype=float)
            adjusted = _adjusted(model, hyp, cs, cfg) if method.is_penalty else model
            # stable sort: equal scores keep ascending id order
            order = np.argsort(-adjusted, kind="stable")
            survivors = 0
            for tok in order.tolist():
                if survivors >= k:
                    break
                step = float(adjusted[tok])
                if banned[tok] or step == -math.inf:
                    continue
                lp = float(model[tok])
                cursor = hyp.cursor
                completions: list[tuple[int, float]] = []
                if method.uses_trie:
                    cursor, completions = advance_cursor(hyp.cursor, tok, lp)
                if method is Method.FILTER_SUBWORD:
                    bad = subword_filter_removes(tok, lp, flat, cfg.threshold)
                elif method is Method.FILTER_MULTISUBWORD:
                    bad = multisubword_filter_removes(completions, cfg.threshold)
                else:
                    bad = False
                cand = Hypothesis(
                    hyp.tokens + (tok,),
                    hyp.step_logprobs + (step,),
                    hyp.model_logprobs + (lp,),
                    hyp.cum_score + step,
                    cursor,
                    constraint_violated=hyp.constraint_violated or bad,
                )
                if bad:
                    removed.append(cand)
                else:
                    kept.append(cand)
                    survivors += 1
        if not kept:
            if finished or not removed:
                break
            kept = removed
        kept.sort(key=_rank_key)
        beam = []
        for h in kept[:k]:
            if h.tokens[-1] == vocab.eos or len(h.tokens) >= cfg.max_len:
                finished.append(replace(h, finished=True))
            else:
                beam.append(h)
        if not beam:
            break
    if not finished:
        finished = [replace(h, finished=True) for h in beam]
    finished.sort(key=lambda h: (-h.score(cfg.length_norm), h.tokens))
    return finished


def strip_eos(tokens: Sequence[int], vocab) -> list[int]:
    return [t for t in tokens if t != vocab.eos]


class ConstrainedBeamDecoder(BaseEstimator):
    """Estimator-style wrapper around :func:`decode`.

    ``fit`` only validates the hyperparameters; the scorer is supplied
    already trained. ``predict`` maps source strings (plus optional
    per-sentence constraints) to detokenized best translations.
    """

    def __init__(
        self,
        scorer=None,
        method="none",
        beam_size=5,
        max_len=50,
        penalty=0.0,
        threshold=-math.inf,
        length_norm=False,
        boundary_aware=False,
    ):
        self.scorer = scorer
        self.method = method
        self.beam_size = beam_size
        self.max_len = max_len
        self.penalty = penalty
        self.threshold = threshold
        self.length_norm = length_norm
        self.boundary_aware = boundary_aware

    def fit(self, X=None, y=None):
        if self.scorer is None:
            raise ValueError("a scorer is required")
        self.config_ = DecodeConfig(
            beam_size=self.beam_size,
            max_len=self.max_len,
            method=Method.parse(self.method),
            penalty=float(self.penalty),
            threshold=float(self.threshold),
            length_norm=self.length_norm,
            boundary_aware=self.boundary_aware,
        )
        self.vocab_ = self.scorer.vocab
        return self

    def _constraint_set(self, c) -> ConstraintSet:
        if c is None:
            return ConstraintSet()
        if isinstance(c, ConstraintSet):
            return c
        return ConstraintSet.from_surfaces(list(c), self.vocab_)

    def decode_nbest(self, source: str, constraints=None) -> list[Hypothesis]:
        check_is_fitted(self, "config_")
        ids = segment(source, self.vocab_)
        return decode(ids, self.scorer, self.config_, self._constraint_set(constraints))

    def predict(self, X, constraints=None):
        check_is_fitted(self, "config_")
        X = list(X)
        if constraints is None:
            constraints = [None] * len(X)
        elif len(constraints) != len(X):
            raise ValueError("constraints must align with X")
        out = []
        for source, c in zip(X, constraints):
            best = self.decode_nbest(source, c)[0]
            out.append(detokenize(best.tokens, self.vocab_))
        return out
