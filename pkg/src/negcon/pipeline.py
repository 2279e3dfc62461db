"""Task pipelines: refinement, paraphrasing, learned-data generation and sweeps."""

from __future__ import annotations

import configparser
import csv
import dataclasses
import enum
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .constraints import (
    SINGLE,
    ConstraintSet,
    SelectionPolicy,
    extract_paraphrase_constraints,
    extract_refinement_constraints,
    select_constraints,
    stem_constraints,
    token_scores_from_subwords,
)
from .decoder import DecodeConfig, Hypothesis, Method, decode
from .metrics import BleuConfig, EvalReport, corpus_bleu, evaluate, sample_references
from .records import SentenceRecord, load_records
from .scoring import (
    EmulatedLearnedScorer,
    LexiconScorer,
    NgramScorer,
    TabularScorer,
    format_learned_input,
    generate_synthetic_training_data,
)
from .text import (
    DEFAULT_STEMMER_RULES,
    DEFAULT_STOPWORDS,
    StemmerConfig,
    Vocabulary,
    detokenize,
    load_word_list,
    segment,
)

logger = logging.getLogger(__name__)


class Task(str, enum.Enum):
    PARAPHRASE = "paraphrase"
    REFINE = "refine"
    GEN_TRAIN_DATA = "gen_train_data"
    SWEEP = "sweep"

    @classmethod
    def parse(cls, value: "str | Task") -> "Task":
        if isinstance(value, Task):
            return value
        key = str(value).strip().lower().replace("-", "_")
        for t in cls:
            if key in (t.value, t.name.lower()):
                return t
        raise ValueError(f"unknown task {value!r}")


class MissingReferences(ValueError):
    pass


@dataclass
class ExperimentConfig:
    task: Task = Task.PARAPHRASE
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    selection: SelectionPolicy = field(default_factory=SelectionPolicy)
    vocab: str | None = None
    scorer: str | None = None
    stopwords: str = str(DEFAULT_STOPWORDS)
    stemmer_rules: str = str(DEFAULT_STEMMER_RULES)
    input: str | None = None
    out_dir: str = "out"
    sweep_values: list = field(default_factory=list)
    sweep_task: Task = Task.PARAPHRASE
    seed: int = 0
    rounds: int = 2
    accumulate: bool = True
    stem: bool = False
    learned: bool = False
    learned_penalty: float = 3.0
    max_constraints: int | None = None
    ref_sample: int = 1000
    jobs: int = 1

    def __post_init__(self) -> None:
        self.task = Task.parse(self.task)
        self.sweep_task = Task.parse(self.sweep_task)
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.task is Task.SWEEP and not self.sweep_values:
            raise ValueError("a sweep needs at least one value")
        if self.sweep_task not in (Task.PARAPHRASE, Task.REFINE):
            raise ValueError("only paraphrase and refine can be swept")

    def check_paths(self) -> None:
        for name in ("vocab", "scorer", "input", "stopwords", "stemmer_rules"):
            path = getattr(self, name)
            if path is None or not Path(path).exists():
                raise FileNotFoundError(f"{name}: {path!r} does not exist")

    @property
    def sweep_param(self) -> str:
        if self.learned or self.decode.method is Method.NONE:
            return "ratio"
        return "penalty" if self.decode.method.is_penalty else "threshold"

    def with_value(self, value) -> "ExperimentConfig":
        param = self.sweep_param
        if param == "ratio":
            return dataclasses.replace(self, selection=SelectionPolicy(value))
        return dataclasses.replace(self, decode=dataclasses.replace(self.decode, **{param: float(value)}))


@dataclass
class Resources:
    vocab: Vocabulary
    scorer: object
    stopwords: frozenset[str]
    stemmer: StemmerConfig


def load_scorer(path: str | Path, vocab: Vocabulary):
    """Tabular JSON by default; ``{"type": "lexicon"|"ngram", ...}`` selects the toy models."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    kind = raw.get("type", "tabular") if isinstance(raw, dict) else "tabular"
    if kind == "lexicon":
        return LexiconScorer(vocab, raw["lexicon"], epsilon=raw.get("epsilon", 1e-3))
    if kind == "ngram":
        pairs = [(segment(s, vocab), segment(t, vocab)) for s, t in raw["corpus"]]
        return NgramScorer(vocab, order=raw.get("order", 3), alpha=raw.get("alpha", 0.1)).fit(pairs)
    return TabularScorer.from_json(path, vocab)


def load_resources(cfg: ExperimentConfig) -> Resources:
    cfg.check_paths()
    vocab = Vocabulary.from_file(cfg.vocab)
    return Resources(
        vocab=vocab,
        scorer=load_scorer(cfg.scorer, vocab),
        stopwords=load_word_list(cfg.stopwords),
        stemmer=StemmerConfig.from_file(cfg.stemmer_rules),
    )


def _parallel_map(fn, items: Sequence, jobs: int) -> list:
    if jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def translate(
    sources: Sequence[str],
    constraint_sets: Sequence[ConstraintSet] | None,
    res: Resources,
    cfg: ExperimentConfig,
) -> list[Hypothesis]:
    """Best hypothesis per source, using the decoder or the learned input format."""
    sets = list(constraint_sets) if constraint_sets is not None else [ConstraintSet()] * len(sources)

    if cfg.learned:
        scorer = EmulatedLearnedScorer(res.scorer, cfg.learned_penalty)
        plain = dataclasses.replace(cfg.decode, method=Method.NONE)

        def one(args):
            src, cs = args
            return decode(segment(format_learned_input(src, cs), res.vocab), scorer, plain)[0]

    else:

        def one(args):
            src, cs = args
            return decode(segment(src, res.vocab), res.scorer, cfg.decode, cs)[0]

    return _parallel_map(one, list(zip(sources, sets)), cfg.jobs)


def _text(h: Hypothesis, vocab: Vocabulary) -> str:
    return detokenize(h.tokens, vocab)


def _references(records: Sequence[SentenceRecord], cfg: ExperimentConfig) -> list[list[str]] | None:
    if not all(r.references for r in records):
        return None
    return [sample_references(r.references, cfg.ref_sample, cfg.seed + i) for i, r in enumerate(records)]


def _selected(
    candidates: ConstraintSet, hyp: Hypothesis, res: Resources, cfg: ExperimentConfig
) -> ConstraintSet:
    scores = token_scores_from_subwords(hyp.tokens, hyp.model_logprobs, res.vocab)
    # candidates whose surface is not a decoded token (overrides) rank last
    for c in candidates:
        scores.setdefault(c.surface, 0.0)
    return select_constraints(candidates, scores, cfg.selection)


def _decoding_set(cs: ConstraintSet, res: Resources, cfg: ExperimentConfig) -> ConstraintSet:
    return stem_constraints(cs, res.stemmer, res.vocab) if cfg.stem else cs


def run_refinement_on(records: Sequence[SentenceRecord], res: Resources, cfg: ExperimentConfig) -> tuple[EvalReport, dict]:
    if not all(r.references for r in records):
        raise MissingReferences("refinement needs at least one reference per record")
    sources = [r.source for r in records]
    first = translate(sources, None, res, cfg)
    first_text = [_text(h, res.vocab) for h in first]
    applied = []
    for rec, hyp, text in zip(records, first, first_text):
        if rec.constraints is not None:
            applied.append(ConstraintSet.from_surfaces(rec.constraints, res.vocab))
            continue
        candidates = extract_refinement_constraints(text, rec.references, res.stopwords, res.vocab)
        applied.append(_selected(candidates, hyp, res, cfg))
    second = translate(sources, [_decoding_set(cs, res, cfg) for cs in applied], res, cfg)
    second_text = [_text(h, res.vocab) for h in second]
    refs = _references(records, cfg)
    report = evaluate(
        [r.id for r in records],
        second_text,
        refs,
        first_text,
        applied,
        res.stemmer,
        scores=[h.cum_score for h in second],
        violated=[h.constraint_violated for h in second],
    )
    bleu_first = corpus_bleu(first_text, refs)
    report.extra = {
        "bleu_pass1": bleu_first,
        "bleu_delta": report.bleu - bleu_first,
        "sentences_with_constraints": sum(bool(cs) for cs in applied),
    }
    return report, {"pass1": first_text, "pass2": second_text}


def run_paraphrase_on(records: Sequence[SentenceRecord], res: Resources, cfg: ExperimentConfig) -> tuple[EvalReport, dict]:
    """Round 0 is unconstrained; each later round forbids content words of the previous round.

    Coverage is measured over the constraints applied in a round; the
    ``coverage_candidates_*`` extras measure it over every content token of
    the baseline instead.
    """
    sources = [r.source for r in records]
    refs = _references(records, cfg)
    hyps = translate(sources, None, res, cfg)
    baseline = [_text(h, res.vocab) for h in hyps]
    outputs = {"round0": baseline}
    cumulative = [ConstraintSet() for _ in records]
    baseline_candidates = [extract_paraphrase_constraints(t, res.stopwords, res.vocab) for t in baseline]
    rounds = [_round_summary(0, baseline, refs, baseline, cumulative, baseline_candidates, res)]
    report = evaluate([r.id for r in records], baseline, refs, baseline, cumulative, res.stemmer)
    for rnd in range(1, cfg.rounds):
        prev_text = outputs[f"round{rnd - 1}"]
        new_sets = []
        for i, (rec, hyp, text) in enumerate(zip(records, hyps, prev_text)):
            if rec.constraints is not None:
                chosen = ConstraintSet.from_surfaces(rec.constraints, res.vocab)
            else:
                chosen = _selected(extract_paraphrase_constraints(text, res.stopwords, res.vocab), hyp, res, cfg)
            new_sets.append(cumulative[i].union(chosen) if cfg.accumulate else chosen)
        cumulative = new_sets
        hyps = translate(sources, [_decoding_set(cs, res, cfg) for cs in cumulative], res, cfg)
        text = [_text(h, res.vocab) for h in hyps]
        outputs[f"round{rnd}"] = text
        report = evaluate(
            [r.id for r in records],
            text,
            refs,
            baseline,
            cumulative,
            res.stemmer,
            scores=[h.cum_score for h in hyps],
            violated=[h.constraint_violated for h in hyps],
        )
        rounds.append(_round_summary(rnd, text, refs, baseline, cumulative, baseline_candidates, res))
    report.extra = {"rounds": rounds, **{k: v for k, v in rounds[-1].items() if k.startswith("coverage_candidates")}}
    return report, outputs


def _round_summary(rnd, text, refs, baseline, sets, candidates, res: Resources) -> dict:
    rep = evaluate([str(i) for i in range(len(text))], text, refs, baseline, sets, res.stemmer)
    cand = evaluate([str(i) for i in range(len(text))], text, None, baseline, candidates, res.stemmer)
    return {
        "round": rnd,
        "bleu": rep.bleu,
        "sim_bleu": rep.sim_bleu,
        "coverage_surface": rep.coverage_surface,
        "coverage_stem": rep.coverage_stem,
        "coverage_detok": rep.coverage_detok,
        "coverage_candidates_surface": cand.coverage_surface,
        "coverage_candidates_stem": cand.coverage_stem,
        "constraints": sum(len(cs) for cs in sets),
    }


def run_task_on(records, res: Resources, cfg: ExperimentConfig, task: Task | None = None):
    task = task or cfg.task
    if task is Task.REFINE:
        return run_refinement_on(records, res, cfg)
    if task is Task.PARAPHRASE:
        return run_paraphrase_on(records, res, cfg)
    raise ValueError(f"task {task} does not produce a report")


CSV_FIELDS = ("value", "bleu", "sim_bleu", "coverage_surface", "coverage_stem")


def _sweep_key(v):
    return (0.0, 1) if v == SINGLE else (float(v), 0)


def run_sweep_on(records, res: Resources, cfg: ExperimentConfig) -> tuple[list[dict], list[dict]]:
    """One row per control value, ordered by value; a failing value yields a NaN row."""
    rows, reports = [], []
    task = cfg.sweep_task
    for value in sorted(cfg.sweep_values, key=_sweep_key):
        try:
            report, _ = run_task_on(records, res, cfg.with_value(value), task)
            row = {
                "value": value,
                "bleu": report.bleu,
                "sim_bleu": report.sim_bleu,
                "coverage_surface": report.coverage_surface,
                "coverage_stem": report.coverage_stem,
            }
            reports.append({"value": value, "report": _summary(report)})
        except Exception:  # noqa: BLE001 - one bad value must not stop the sweep
            logger.exception("sweep value %r failed", value)
            row = {"value": value, **{k: math.nan for k in CSV_FIELDS[1:]}}
            reports.append({"value": value, "report": None})
        rows.append(row)
    return rows, reports


def _summary(report: EvalReport) -> dict:
    d = report.to_dict()
    d.pop("per_sentence")
    return d


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "-inf" if v < 0 else "inf"
        return f"{v:.6f}"
    return str(v)


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for row in rows:
        w.writerow([_fmt(row[k]) for k in CSV_FIELDS])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return None
        if math.isinf(obj):
            return "-inf" if obj < 0 else "inf"
        return obj
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, enum.Enum):
        return obj.value
    return obj


def config_dict(cfg: ExperimentConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["selection"] = {"ratio": cfg.selection.ratio}
    return _jsonable(d)


def write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(_jsonable(payload), ensure_ascii=False, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def write_lines(path: Path, lines: Sequence[str]) -> None:
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def _load(cfg: ExperimentConfig):
    res = load_resources(cfg)
    records = load_records(cfg.input)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return res, records, out


def run_refinement(cfg: ExperimentConfig) -> EvalReport:
    res, records, out = _load(cfg)
    report, outputs = run_refinement_on(records, res, cfg)
    write_json(out / "report.json", {"config": config_dict(cfg), "report": report.to_dict()})
    for name, lines in outputs.items():
        write_lines(out / f"{name}.txt", lines)
    return report


def run_paraphrase(cfg: ExperimentConfig) -> tuple[EvalReport, dict]:
    res, records, out = _load(cfg)
    report, outputs = run_paraphrase_on(records, res, cfg)
    write_json(out / "report.json", {"config": config_dict(cfg), "report": report.to_dict()})
    for name, lines in outputs.items():
        write_lines(out / f"{name}.txt", lines)
    return report, outputs


def run_sweep(cfg: ExperimentConfig) -> list[dict]:
    res, records, out = _load(cfg)
    rows, reports = run_sweep_on(records, res, cfg)
    write_json(out / "report.json", {"config": config_dict(cfg), "param": cfg.sweep_param, "sweep": reports})
    (out / "curve.csv").write_text(rows_to_csv(rows), encoding="utf-8")
    return rows


def gen_train_data_on(records: Sequence[SentenceRecord], res: Resources, cfg: ExperimentConfig) -> list[str]:
    """Annotated lines; explicit record constraints bypass extraction."""
    lines: list[str | None] = [None] * len(records)
    todo = []
    for i, rec in enumerate(records):
        if rec.constraints is not None:
            cs = ConstraintSet.from_surfaces(rec.constraints, res.vocab)
            if cfg.stem:
                cs = stem_constraints(cs, res.stemmer, res.vocab)
            if cfg.max_constraints is not None:
                cs = ConstraintSet(cs.constraints[: cfg.max_constraints])
            lines[i] = format_learned_input(rec.source, cs)
        elif not rec.references:
            lines[i] = rec.source
        else:
            todo.append(i)
    if todo:
        generated = generate_synthetic_training_data(
            [(records[i].source, records[i].references[0]) for i in todo],
            res.scorer,
            dataclasses.replace(cfg.decode, method=Method.NONE),
            res.stopwords,
            res.stemmer if cfg.stem else None,
            cfg.max_constraints,
        )
        for i, line in zip(todo, generated):
            lines[i] = line
    return lines


def run_gen_train_data(cfg: ExperimentConfig) -> Path:
    res, records, out = _load(cfg)
    lines = gen_train_data_on(records, res, cfg)
    path = out / "train.txt"
    write_lines(path, lines)
    with_c = sum(" <sep> " in line for line in lines)
    print(f"wrote {len(lines)} lines to {path}: {with_c} with constraints, {len(lines) - with_c} without")
    return path


def run(cfg: ExperimentConfig):
    if cfg.task is Task.REFINE:
        return run_refinement(cfg)
    if cfg.task is Task.PARAPHRASE:
        return run_paraphrase(cfg)
    if cfg.task is Task.SWEEP:
        return run_sweep(cfg)
    return run_gen_train_data(cfg)


def read_config_file(path: str | Path) -> dict[str, str]:
    """Flat key/value settings from an INI file (``[experiment]`` section or none)."""
    text = Path(path).read_text(encoding="utf-8")
    parser = configparser.ConfigParser()
    if not text.lstrip().startswith("["):
        text = "[experiment]\n" + text
    parser.read_string(text)
    section = parser["experiment"] if parser.has_section("experiment") else parser[parser.sections()[0]]
    return {k.replace("-", "_"): v.strip().strip('"') for k, v in section.items()}
