"""Command-line entry point: synth, train, eval, gradcheck, export-pr."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Any, Sequence

from .config import TrainConfig, PRESETS, apply_preset, parse_overrides, read_config_file, update_dataclass
from .corpus import load_corpus
from .errors import ContractError, CorpusError, NumericError
from .synth import SynthSpec, generate_synthetic

log = logging.getLogger("hiram")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC, EXIT_CONTRACT, EXIT_IO = 0, 1, 2, 3, 4, 5
VERBS = ("synth", "train", "eval", "gradcheck", "export-pr")


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hiram", description=__doc__)
    parser.add_argument("verb", choices=VERBS)
    parser.add_argument("overrides", nargs="*", metavar="key=value", help="config overrides, applied last")
    parser.add_argument("--config", type=Path, help="YAML key-value config file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--preset", choices=sorted(PRESETS))
    parser.add_argument("--dump-align", action="store_true", help="eval: write per-sentence alignment weights")
    parser.add_argument("--out", type=Path, help="output directory (export-pr: output file)")
    parser.add_argument("--data", type=Path, help="corpus directory with train/test/types jsonl")
    parser.add_argument("--checkpoint", type=Path, help="eval: checkpoint file (default OUT/best.bin)")
    parser.add_argument("--predictions", type=Path, help="export-pr: predictions jsonl")
    parser.add_argument("--setting", choices=("one", "two", "all"), default="all", help="export-pr subset")
    parser.add_argument("--tol", type=float, default=1e-4, help="gradcheck relative tolerance")
    parser.add_argument("-q", "--quiet", action="store_true")
    return parser


def _section(values: dict[str, Any], name: str) -> dict[str, Any]:
    """Keys for one dataclass: a nested ``name:`` section if present, else the flat mapping."""
    if "train" in values or "synth" in values:
        extra = set(values) - {"train", "synth"}
        if extra:
            raise ContractError(f"unknown top-level config keys {sorted(extra)}")
        section = values.get(name) or {}
        if not isinstance(section, dict):
            raise ContractError(f"config section {name!r} must be a mapping")
        return section
    return values


def _file_values(args) -> dict[str, Any]:
    return read_config_file(args.config) if args.config else {}


def resolve_train_config(args) -> TrainConfig:
    try:
        config = update_dataclass(TrainConfig(), _section(_file_values(args), "train"), "config")
        if args.preset:
            config = apply_preset(config, args.preset)
        config = update_dataclass(config, parse_overrides(args.overrides), "config")
        if args.seed is not None:
            config.seed = args.seed
        return config.validate()
    except ContractError as exc:
        raise UsageError(str(exc)) from exc


def resolve_synth_spec(args) -> SynthSpec:
    try:
        spec = update_dataclass(SynthSpec(), _section(_file_values(args), "synth"), "synth")
        spec = update_dataclass(spec, parse_overrides(args.overrides), "synth")
        spec.validate()
        return spec
    except ContractError as exc:
        raise UsageError(str(exc)) from exc


def _require(value, flag: str):
    if value is None:
        raise UsageError(f"{flag} is required for this verb")
    return value


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def cmd_synth(args) -> int:
    spec = resolve_synth_spec(args)
    seed = args.seed if args.seed is not None else 0
    out = _require(args.out, "--out")
    log.info("synth spec %s seed %d", json.dumps(asdict(spec), sort_keys=True), seed)
    generate_synthetic(spec, seed, out)
    print(f"wrote synthetic corpus to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .trainer import train

    config = resolve_train_config(args)
    data, out = _require(args.data, "--data"), _require(args.out, "--out")
    log.info("train config %s seed %d", json.dumps(config.to_dict(), sort_keys=True), config.seed)
    corpus = load_corpus(data, config.levels, config.type_limit, config.min_freq)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", config.to_dict())
    result = train(corpus, config, out)
    last = result.metrics[-1]
    print(f"trained {config.epochs} epochs; best epoch {result.best_epoch}; "
          f"final train accuracy {last.train_accuracy:.4f}; checkpoints in {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .evaluation import evaluate_model, export_pr, write_predictions, write_summary
    from .trainer import restore_model

    data, out = _require(args.data, "--data"), _require(args.out, "--out")
    ckpt = args.checkpoint or out / "best.bin"
    manifest = json.loads(ckpt.with_suffix(".json").read_text(encoding="utf-8"))
    config = update_dataclass(TrainConfig(), manifest["config"], "config")
    seed = args.seed if args.seed is not None else config.seed
    log.info("eval checkpoint %s config %s seed %d", ckpt, json.dumps(config.to_dict(), sort_keys=True), seed)
    corpus = load_corpus(data, manifest["levels"], manifest["type_limit"], config.min_freq)
    model, feat, _ = restore_model(ckpt, corpus.types)
    records, summary = evaluate_model(model, feat, corpus.test, corpus.train, seed, config.count_unit)
    out.mkdir(parents=True, exist_ok=True)
    write_predictions(out / "predictions.jsonl", records)
    write_summary(out / "summary.jsonl", summary)
    try:
        export_pr(records, out / "pr_all.tsv", "all")
    except ContractError as exc:
        log.warning("no PR curve: %s", exc)
    if args.dump_align:
        with (out / "alignments.jsonl").open("w", encoding="utf-8") as fh:
            for enc in feat.bags([b for b in corpus.test if b.relation in feat.hierarchy.index[0]]):
                for rec in model.alignments(enc):
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")
    for row in summary:
        print(json.dumps(row, sort_keys=True))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradsuite import run_suite

    seed = args.seed if args.seed is not None else 0
    log.info("gradcheck tol %g seed %d", args.tol, seed)
    reports = run_suite(args.tol, seed)
    failed = [r for r in reports if not r.passed]
    for rep in reports:
        if not args.quiet or not rep.passed:
            print(rep)
    print(f"{len(reports) - len(failed)}/{len(reports)} gradient checks passed at tol {args.tol:g}")
    return EXIT_OK if not failed else EXIT_FAIL


def cmd_export_pr(args) -> int:
    from .evaluation import export_pr, read_predictions

    preds, out = _require(args.predictions, "--predictions"), _require(args.out, "--out")
    export_pr(read_predictions(preds), out, args.setting)
    print(f"wrote PR curve ({args.setting}) to {out}")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval,
            "gradcheck": cmd_gradcheck, "export-pr": cmd_export_pr}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_intermixed_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.overrides and args.verb in ("gradcheck", "export-pr", "eval"):
        parser.error(f"{args.verb} takes no key=value overrides")
    try:
        return COMMANDS[args.verb](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"hiram: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"hiram: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ContractError, CorpusError) as exc:
        print(f"hiram: contract error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except OSError as exc:
        print(f"hiram: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
