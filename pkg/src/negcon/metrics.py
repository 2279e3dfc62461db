"""BLEU, similarity BLEU and constraint coverage."""

from __future__ import annotations

import enum
import math
import random
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

from .constraints import ConstraintSet
from .text import StemmerConfig, Vocabulary, detokenize, is_punctuation, stem, word_tokenize


class LengthMismatch(ValueError):
    pass


class EmptyRefs(ValueError):
    pass


@dataclass(frozen=True)
class BleuConfig:
    """Corpus BLEU settings.

    The tokenizer is whitespace plus punctuation splitting, an approximation
    of the 13a tokenizer. Zero n-gram matches are smoothed with the
    exponential ("exp") method.
    """

    max_ngram: int = 4
    case_sensitive: bool = True
    tokenizer: Callable[[str], list[str]] = word_tokenize

    def __post_init__(self) -> None:
        if self.max_ngram < 1:
            raise ValueError("max_ngram must be >= 1")


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


@dataclass
class BleuStats:
    correct: list[int]
    total: list[int]
    sys_len: int
    ref_len: int

    def __add__(self, other: "BleuStats") -> "BleuStats":
        return BleuStats(
            [a + b for a, b in zip(self.correct, other.correct)],
            [a + b for a, b in zip(self.total, other.total)],
            self.sys_len + other.sys_len,
            self.ref_len + other.ref_len,
        )


def sentence_stats(hyp: str, refs: Sequence[str], cfg: BleuConfig = BleuConfig()) -> BleuStats:
    norm = (lambda s: s) if cfg.case_sensitive else str.casefold
    h = cfg.tokenizer(norm(hyp))
    rs = [cfg.tokenizer(norm(r)) for r in refs]
    correct, total = [], []
    for n in range(1, cfg.max_ngram + 1):
        hyp_counts = _ngrams(h, n)
        max_ref: Counter = Counter()
        for r in rs:
            max_ref |= _ngrams(r, n)
        correct.append(sum(min(c, max_ref[g]) for g, c in hyp_counts.items()))
        total.append(max(len(h) - n + 1, 0))
    # closest reference length, shorter one on ties
    ref_len = min((abs(len(r) - len(h)), len(r)) for r in rs)[1]
    return BleuStats(correct, total, len(h), ref_len)


def bleu_from_stats(stats: BleuStats) -> float:
    if not any(stats.correct):
        return 0.0
    log_sum = 0.0
    order = 0
    smooth = 1.0
    for correct, total in zip(stats.correct, stats.total):
        if total == 0:
            break
        order += 1
        if correct == 0:
            smooth *= 2
            log_sum += math.log(1.0 / (smooth * total))
        else:
            log_sum += math.log(correct / total)
    if stats.sys_len < stats.ref_len:
        bp = math.exp(1 - stats.ref_len / stats.sys_len)
    else:
        bp = 1.0
    return 100.0 * bp * math.exp(log_sum / order)


def corpus_bleu(hyps: Sequence[str], refs: Sequence[Sequence[str]], cfg: BleuConfig = BleuConfig()) -> float:
    """Corpus BLEU in [0, 100] with per-sentence multi-reference clipping.

    Orders with no hypothesis n-grams anywhere in the corpus are left out of
    the geometric mean, so a corpus of short exact matches still scores 100.
    """
    if len(hyps) != len(refs):
        raise LengthMismatch(f"{len(hyps)} hypotheses vs {len(refs)} reference lists")
    if not hyps:
        return 0.0
    stats = None
    for hyp, rs in zip(hyps, refs):
        if not rs:
            raise EmptyRefs("every hypothesis needs at least one reference")
        s = sentence_stats(hyp, rs, cfg)
        stats = s if stats is None else stats + s
    return bleu_from_stats(stats)


def similarity_bleu(translation: str | Sequence[str], baseline: str | Sequence[str], cfg: BleuConfig = BleuConfig()) -> float:
    """BLEU of a translation (or corpus) scored against the unconstrained baseline."""
    if isinstance(translation, str):
        translation, baseline = [translation], [baseline]
    return corpus_bleu(list(translation), [[b] for b in baseline], cfg)


class CoverageLevel(str, enum.Enum):
    SURFACE = "surface"
    STEM = "stem"
    DETOK = "detok"


def _content(text: str) -> list[str]:
    return [t.casefold() for t in word_tokenize(text) if not is_punctuation(t)]


def _contains_run(haystack: Sequence[str], needle: Sequence[str]) -> bool:
    n = len(needle)
    return n > 0 and any(tuple(haystack[i : i + n]) == tuple(needle) for i in range(len(haystack) - n + 1))


def constraint_covered(
    translation: str, surface: str, level: CoverageLevel, stem_cfg: StemmerConfig | None = None
) -> bool:
    level = CoverageLevel(level)
    if level is CoverageLevel.DETOK:
        needle = " ".join(surface.split()).casefold()
        if not needle:
            return False
        pattern = r"(?<!\w)" + re.escape(needle) + r"(?!\w)"
        return re.search(pattern, " ".join(translation.split()).casefold()) is not None
    words = _content(surface)
    tokens = _content(translation)
    if level is CoverageLevel.STEM:
        if stem_cfg is None:
            raise ValueError("stem coverage needs a stemmer config")
        words = [stem(w, stem_cfg) for w in words]
        tokens = [stem(t, stem_cfg) for t in tokens]
    return _contains_run(tokens, words)


def coverage(
    translation: str,
    cs: ConstraintSet,
    level: CoverageLevel | str = CoverageLevel.SURFACE,
    stem_cfg: StemmerConfig | None = None,
    vocab: Vocabulary | None = None,
) -> float:
    """Fraction of constraints still present in the translation (each counted once).

    An empty constraint set yields 0.
    """
    if not cs:
        return 0.0
    surfaces = [c.surface for c in cs]
    hits = sum(constraint_covered(translation, s, level, stem_cfg) for s in surfaces)
    return hits / len(surfaces)


def segmentation_circumventions(output_ids: Sequence[int], cs: ConstraintSet, vocab: Vocabulary) -> list[str]:
    """Constraints absent as subword runs but present in the detokenized output."""
    text = detokenize(output_ids, vocab)
    ids = list(output_ids)
    out = []
    for c in cs:
        as_ids = any(
            tuple(ids[i : i + len(c.subword_ids)]) == c.subword_ids for i in range(len(ids) - len(c.subword_ids) + 1)
        )
        if not as_ids and constraint_covered(text, c.surface, CoverageLevel.DETOK):
            out.append(c.surface)
    return out


def sample_references(refs: Sequence[str], k: int, seed: int = 0) -> list[str]:
    """Seeded sample of ``min(k, len(refs))`` references, kept in their original order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not refs:
        raise EmptyRefs("no references to sample from")
    if k >= len(refs):
        return list(refs)
    picked = sorted(random.Random(seed).sample(range(len(refs)), k))
    return [refs[i] for i in picked]


@dataclass
class SentenceDiagnostics:
    id: str
    hypothesis: str
    constraints: list[str]
    covered_surface: list[str] = field(default_factory=list)
    covered_stem: list[str] = field(default_factory=list)
    covered_detok: list[str] = field(default_factory=list)
    score: float | None = None
    constraint_violated: bool = False
    no_constraints: bool = False


@dataclass
class EvalReport:
    bleu: float
    sim_bleu: float
    coverage_surface: float
    coverage_stem: float
    coverage_detok: float
    per_sentence: list[SentenceDiagnostics] = field(default_factory=list)
    comet: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(
    ids: Sequence[str],
    hypotheses: Sequence[str],
    references: Sequence[Sequence[str]] | None,
    baselines: Sequence[str],
    constraint_sets: Sequence[ConstraintSet],
    stem_cfg: StemmerConfig,
    bleu_cfg: BleuConfig = BleuConfig(),
    scores: Sequence[float] | None = None,
    violated: Sequence[bool] | None = None,
) -> EvalReport:
    """Corpus report; coverages are averaged over sentences that have constraints."""
    per = []
    cov = {lvl: [] for lvl in CoverageLevel}
    for i, (sid, hyp, cs) in enumerate(zip(ids, hypotheses, constraint_sets)):
        d = SentenceDiagnostics(
            id=str(sid),
            hypothesis=hyp,
            constraints=cs.surfaces,
            score=None if scores is None else float(scores[i]),
            constraint_violated=bool(violated[i]) if violated is not None else False,
            no_constraints=not cs,
        )
        for lvl, bucket in ((CoverageLevel.SURFACE, d.covered_surface), (CoverageLevel.STEM, d.covered_stem), (CoverageLevel.DETOK, d.covered_detok)):
            bucket.extend(c.surface for c in cs if constraint_covered(hyp, c.surface, lvl, stem_cfg))
            if cs:
                cov[lvl].append(len(bucket) / len(cs))
        per.append(d)

    def mean(xs: list[float]) -> float:
        return sum(xs) / len(xs) if xs else 0.0

    has_refs = references is not None and all(references)
    bleu = corpus_bleu(list(hypotheses), [list(r) for r in references], bleu_cfg) if has_refs else float("nan")
    return EvalReport(
        bleu=bleu,
        sim_bleu=similarity_bleu(list(hypotheses), list(baselines), bleu_cfg),
        coverage_surface=mean(cov[CoverageLevel.SURFACE]),
        coverage_stem=mean(cov[CoverageLevel.STEM]),
        coverage_detok=mean(cov[CoverageLevel.DETOK]),
        per_sentence=per,
    )
