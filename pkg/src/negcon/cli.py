"""Command-line entry points."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .constraints import SelectionPolicy
from .decoder import DecodeConfig, Method
from .pipeline import ExperimentConfig, Task, read_config_file, run, write_json
from .records import write_records
from .synthetic import make_suite

# argparse dest -> ExperimentConfig / DecodeConfig field
_DECODE_KEYS = {"method", "penalty", "threshold", "beam_size", "max_len", "length_norm", "boundary_aware"}
_BOOL_KEYS = {"stem", "learned", "length_norm", "boundary_aware", "accumulate"}


def _float(value: str) -> float:
    return float(value.replace("−", "-"))


def _values(text: str) -> list:
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if part:
            out.append("single" if part.lower() in ("single", "singl") else _float(part))
    return out


def _ratio(value: str):
    return "single" if str(value).lower() in ("single", "singl") else float(value)


def _bool(value) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in ("1", "true", "yes", "on")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="negcon", description="Negative lexical constraints for beam-search decoding.")
    p.add_argument("--config", help="INI key=value file; flags override its values")
    p.add_argument("--task", choices=[t.value for t in Task])
    p.add_argument("--method", choices=[m.value for m in Method])
    p.add_argument("--penalty", type=_float)
    p.add_argument("--threshold", type=_float, help="log-prob threshold; '-inf' disables filtering")
    p.add_argument("--ratio", type=_ratio, help="fraction of candidate constraints to use, or 'single'")
    p.add_argument("--beam-size", type=int)
    p.add_argument("--max-len", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--stem", action="store_true", default=None, help="stem constraints before decoding")
    p.add_argument("--sweep", type=_values, help="comma-separated control values (implies --task sweep)")
    p.add_argument("--sweep-task", choices=[Task.PARAPHRASE.value, Task.REFINE.value])
    p.add_argument("--seed", type=int)
    p.add_argument("--vocab")
    p.add_argument("--scorer")
    p.add_argument("--stopwords")
    p.add_argument("--stemmer-rules")
    p.add_argument("--input")
    p.add_argument("--out-dir")
    p.add_argument("--no-accumulate", dest="accumulate", action="store_false", default=None)
    p.add_argument("--max-constraints", type=int)
    p.add_argument("--learned", action="store_true", default=None, help="pass constraints in the input (emulated model)")
    p.add_argument("--learned-penalty", type=_float)
    p.add_argument("--ref-sample", type=int, help="max references per sentence for BLEU")
    p.add_argument("--jobs", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    settings: dict = {}
    if args.config:
        settings.update(read_config_file(args.config))
    for key, value in vars(args).items():
        if key in ("config", "verbose") or value is None:
            continue
        settings["sweep_values" if key == "sweep" else key] = value
    if "sweep_values" in settings and "task" not in settings:
        settings["task"] = Task.SWEEP.value

    decode_kwargs = {}
    exp_kwargs = {}
    for key, value in settings.items():
        if key in _BOOL_KEYS:
            value = _bool(value)
        if key in _DECODE_KEYS:
            decode_kwargs[key] = value
        else:
            exp_kwargs[key] = value
    for key in ("penalty", "threshold"):
        if key in decode_kwargs:
            decode_kwargs[key] = _float(str(decode_kwargs[key]))
    for key in ("beam_size", "max_len"):
        if key in decode_kwargs:
            decode_kwargs[key] = int(decode_kwargs[key])
    for key in ("rounds", "seed", "ref_sample", "jobs", "max_constraints"):
        if key in exp_kwargs:
            exp_kwargs[key] = int(exp_kwargs[key])
    if "learned_penalty" in exp_kwargs:
        exp_kwargs["learned_penalty"] = _float(str(exp_kwargs["learned_penalty"]))
    if isinstance(exp_kwargs.get("sweep_values"), str):
        exp_kwargs["sweep_values"] = _values(exp_kwargs["sweep_values"])
    ratio = exp_kwargs.pop("ratio", 1.0)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(exp_kwargs) - known
    if unknown:
        raise SystemExit(f"unknown configuration keys: {sorted(unknown)}")
    return ExperimentConfig(decode=DecodeConfig(**decode_kwargs), selection=SelectionPolicy(_ratio(ratio)), **exp_kwargs)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        result = run(cfg)
    except (ValueError, FileNotFoundError) as exc:
        print(f"negcon: error: {exc}", file=sys.stderr)
        return 2
    if cfg.task is Task.SWEEP:
        print(Path(cfg.out_dir, "curve.csv").read_text(encoding="utf-8"), end="")
    elif cfg.task in (Task.PARAPHRASE, Task.REFINE):
        report = result[0] if isinstance(result, tuple) else result
        print(f"BLEU {report.bleu:.2f}  Sim {report.sim_bleu:.2f}  Cvg {report.coverage_surface:.2f}  StemCvg {report.coverage_stem:.2f}")
    return 0


def make_demo_main(argv=None) -> int:
    """Write a synthetic suite (vocab, scorer, records, resources) to a directory."""
    p = argparse.ArgumentParser(prog="negcon-make-demo", description=make_demo_main.__doc__)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--sentences", type=int, default=200)
    p.add_argument("--concepts", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    suite = make_suite(args.sentences, args.concepts, seed=args.seed)
    suite.vocab.to_file(out / "vocab.txt")
    write_json(out / "scorer.json", suite.lexicon_json())
    write_records(suite.records, out / "input.jsonl")
    (out / "stopwords.txt").write_text("\n".join(sorted(suite.stopwords)) + "\n", encoding="utf-8")
    rules = "".join(f"{s}\t{m}\n" for s, m in suite.stemmer.suffix_rules)
    (out / "stemmer_rules.tsv").write_text(rules, encoding="utf-8")
    print(json.dumps({"out_dir": str(out), "sentences": len(suite.records), "vocab": len(suite.vocab)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
