"""Negative constraints, the constraint trie and per-hypothesis match cursors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .text import (
    StemmerConfig,
    Vocabulary,
    content_tokens,
    detokenize,
    segment,
    stem,
    word_tokenize,
    is_punctuation,
)


class EmptyConstraint(ValueError):
    pass


class MissingScore(KeyError):
    pass


@dataclass(frozen=True)
class Constraint:
    subword_ids: tuple[int, ...]
    surface: str
    stem_key: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "subword_ids", tuple(self.subword_ids))
        if not self.subword_ids:
            raise EmptyConstraint(f"constraint {self.surface!r} has no subwords")

    @classmethod
    def from_surface(cls, surface: str, vocab: Vocabulary) -> "Constraint":
        ids = segment(surface, vocab)
        if not ids:
            raise EmptyConstraint(f"constraint {surface!r} segments to nothing")
        return cls(tuple(ids), " ".join(surface.split()))


class ConstraintSet:
    """Ordered, de-duplicated collection of constraints.

    Two constraints with the same subword sequence are the same constraint;
    the first one wins.
    """

    def __init__(self, constraints: Iterable[Constraint] = ()) -> None:
        seen: set[tuple[int, ...]] = set()
        kept = []
        for c in constraints:
            if c.subword_ids not in seen:
                seen.add(c.subword_ids)
                kept.append(c)
        self.constraints: tuple[Constraint, ...] = tuple(kept)
        self.flat_subword_ids: frozenset[int] = frozenset(i for c in kept for i in c.subword_ids)

    @classmethod
    def from_surfaces(cls, surfaces: Iterable[str], vocab: Vocabulary) -> "ConstraintSet":
        return cls(Constraint.from_surface(s, vocab) for s in surfaces if s.strip())

    @classmethod
    def from_id_lists(cls, id_lists: Iterable[Sequence[int]], vocab: Vocabulary | None = None) -> "ConstraintSet":
        out = []
        for ids in id_lists:
            surface = detokenize(ids, vocab) if vocab is not None else " ".join(map(str, ids))
            out.append(Constraint(tuple(ids), surface))
        return cls(out)

    def __len__(self) -> int:
        return len(self.constraints)

    def __iter__(self):
        return iter(self.constraints)

    def __getitem__(self, i: int) -> Constraint:
        return self.constraints[i]

    def __bool__(self) -> bool:
        return bool(self.constraints)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ConstraintSet) and self.constraints == other.constraints

    def __repr__(self) -> str:
        return f"ConstraintSet({[c.surface for c in self.constraints]!r})"

    @property
    def surfaces(self) -> list[str]:
        return [c.surface for c in self.constraints]

    def union(self, other: "ConstraintSet") -> "ConstraintSet":
        return ConstraintSet(self.constraints + other.constraints)


@dataclass
class _Node:
    depth: int
    children: dict[int, int] = field(default_factory=dict)
    # next id -> indices of constraints completed by taking it
    completing: dict[int, list[int]] = field(default_factory=dict)
    completed_constraints: list[int] = field(default_factory=list)

    @property
    def completing_ids(self) -> frozenset[int]:
        return frozenset(self.completing)


class ConstraintTrie:
    """Prefix tree over constraint subword sequences, stored as a node arena.

    Node 0 is the root. ``completing`` on a node lists the ids that, taken
    next, finish some constraint; a length-1 constraint therefore sits in
    the root's completing map.
    """

    ROOT = 0

    def __init__(self, cs: ConstraintSet, word_initial_ids: frozenset[int] | None = None) -> None:
        self.constraint_set = cs
        self.word_initial_ids = word_initial_ids
        self.nodes: list[_Node] = [_Node(0)]
        for idx, c in enumerate(cs):
            if not c.subword_ids:
                raise EmptyConstraint(c.surface)
            node = self.ROOT
            for tok in c.subword_ids[:-1]:
                nxt = self.nodes[node].children.get(tok)
                if nxt is None:
                    nxt = len(self.nodes)
                    self.nodes.append(_Node(self.nodes[node].depth + 1))
                    self.nodes[node].children[tok] = nxt
                node = nxt
            last = c.subword_ids[-1]
            self.nodes[node].completing.setdefault(last, []).append(idx)
            end = self.nodes[node].children.get(last)
            if end is None:
                end = len(self.nodes)
                self.nodes.append(_Node(self.nodes[node].depth + 1))
                self.nodes[node].children[last] = end
            self.nodes[end].completed_constraints.append(idx)

    def __len__(self) -> int:
        return len(self.nodes)

    def child(self, node: int, token: int) -> int | None:
        return self.nodes[node].children.get(token)

    def node_for(self, path: Sequence[int]) -> int | None:
        node = self.ROOT
        for tok in path:
            node = self.child(node, tok)
            if node is None:
                return None
        return node

    def start_cursor(self) -> "TrieCursor":
        return TrieCursor(self, {})


def build_trie(cs: ConstraintSet, word_initial_ids: frozenset[int] | None = None) -> ConstraintTrie:
    """Build the trie; pass ``word_initial_ids`` to only start matches at word starts."""
    return ConstraintTrie(cs, word_initial_ids)


class TrieCursor:
    """Live partial matches of one hypothesis.

    ``active`` maps non-root node -> summed log probability of the subwords
    matched on the way there. The root is always implicitly active.
    Cursors are immutable; advancing returns a new cursor.
    """

    __slots__ = ("trie", "active")

    def __init__(self, trie: ConstraintTrie, active: Mapping[int, float]) -> None:
        self.trie = trie
        self.active = dict(active)

    @property
    def active_nodes(self) -> frozenset[int]:
        return frozenset(self.active) | {ConstraintTrie.ROOT}

    @property
    def accumulated_scores(self) -> dict[int, float]:
        return {ConstraintTrie.ROOT: 0.0, **self.active}

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TrieCursor) and self.trie is other.trie and self.active == other.active

    def __repr__(self) -> str:
        return f"TrieCursor({self.active!r})"


def advance_cursor(cur: TrieCursor, token: int, token_logprob: float) -> tuple[TrieCursor, list[tuple[int, float]]]:
    trie = cur.trie
    nodes = trie.nodes
    new_active: dict[int, float] = {}
    completions: list[tuple[int, float]] = []
    sources = list(cur.active.items())
    if trie.word_initial_ids is None or token in trie.word_initial_ids:
        sources.append((ConstraintTrie.ROOT, 0.0))
    for node, score in sources:
        nxt = nodes[node].children.get(token)
        if nxt is None:
            continue
        total = score + token_logprob
        for idx in nodes[node].completing.get(token, ()):
            completions.append((idx, total))
        if nodes[nxt].children:
            new_active[nxt] = total
    completions.sort()
    return TrieCursor(trie, new_active), completions


def penalized_ids(cur: TrieCursor) -> set[tuple[int, int]]:
    """(vocabulary id, constraint index) pairs that would complete a constraint next."""
    trie = cur.trie
    out: set[tuple[int, int]] = set()
    for node in cur.active:
        for tok, idxs in trie.nodes[node].completing.items():
            out.update((tok, i) for i in idxs)
    for tok, idxs in trie.nodes[ConstraintTrie.ROOT].completing.items():
        if trie.word_initial_ids is None or tok in trie.word_initial_ids:
            out.update((tok, i) for i in idxs)
    return out


def penalized_vocab_ids(cur: TrieCursor) -> set[int]:
    return {tok for tok, _ in penalized_ids(cur)}


def _unique_casefolded(tokens: Iterable[str]) -> list[str]:
    seen = set()
    out = []
    for t in tokens:
        key = t.casefold()
        if key not in seen:
            seen.add(key)
            out.append(t)
    return out


def extract_refinement_constraints(
    hypothesis: str, references: Sequence[str], stopwords: Iterable[str], vocab: Vocabulary
) -> ConstraintSet:
    """Content tokens of the hypothesis that no reference confirms."""
    if not references:
        raise ValueError("at least one reference is required")
    confirmed = {t.casefold() for ref in references for t in word_tokenize(ref)}
    survivors = [t for t in content_tokens(hypothesis, stopwords) if t.casefold() not in confirmed]
    return ConstraintSet.from_surfaces(_unique_casefolded(survivors), vocab)


def extract_paraphrase_constraints(baseline_translation: str, stopwords: Iterable[str], vocab: Vocabulary) -> ConstraintSet:
    return ConstraintSet.from_surfaces(_unique_casefolded(content_tokens(baseline_translation, stopwords)), vocab)


SINGLE = "single"


@dataclass(frozen=True)
class SelectionPolicy:
    """How many candidate constraints to keep: a ratio in [0, 1] or ``SINGLE``."""

    ratio: float | str = 1.0

    def __post_init__(self) -> None:
        if isinstance(self.ratio, str):
            if self.ratio.lower() not in (SINGLE, "singl"):
                object.__setattr__(self, "ratio", float(self.ratio))
            else:
                object.__setattr__(self, "ratio", SINGLE)
        if self.ratio != SINGLE and not 0.0 <= float(self.ratio) <= 1.0:
            raise ValueError(f"ratio must lie in [0, 1], got {self.ratio}")

    def count(self, n: int) -> int:
        if self.ratio == SINGLE:
            return min(1, n)
        # round away float noise such as 0.7 * 10 == 7.000000000000001
        return min(n, math.ceil(round(float(self.ratio) * n, 9)))


def token_scores_from_subwords(tokens: Sequence[int], logprobs: Sequence[float], vocab: Vocabulary) -> dict[str, float]:
    """Per-token score of a decoded hypothesis: summed subword log probabilities.

    Scores are summed per whitespace word; punctuation split off a word
    shares the word's score. Repeated tokens keep their lowest score.
    """
    scores: dict[str, float] = {}
    words: list[tuple[list[int], float]] = []
    for tok, lp in zip(tokens, logprobs):
        if tok in (vocab.bos, vocab.eos):
            continue
        if vocab.is_word_initial(tok) or not words:
            words.append(([tok], lp))
        else:
            ids, total = words[-1]
            ids.append(tok)
            words[-1] = (ids, total + lp)
    for ids, total in words:
        for t in word_tokenize(detokenize(ids, vocab)):
            if is_punctuation(t):
                continue
            scores[t] = min(total, scores.get(t, math.inf))
    return scores


def select_constraints(
    candidates: ConstraintSet, token_scores: Mapping[str, float], policy: SelectionPolicy
) -> ConstraintSet:
    """Keep the lowest-scoring candidates; ties go to the lexicographically smaller surface."""
    keyed = []
    for c in candidates:
        if c.surface not in token_scores:
            raise MissingScore(c.surface)
        keyed.append((token_scores[c.surface], c.surface, c))
    keyed.sort(key=lambda k: (k[0], k[1]))
    k = policy.count(len(keyed))
    return ConstraintSet(c for _, _, c in keyed[:k])


def stem_constraints(cs: ConstraintSet, cfg: StemmerConfig, vocab: Vocabulary) -> ConstraintSet:
    out = []
    for c in cs:
        key = " ".join(stem(w, cfg) for w in c.surface.split())
        ids = segment(key, vocab)
        out.append(Constraint(tuple(ids), detokenize(ids, vocab), stem_key=key))
    return ConstraintSet(out)
