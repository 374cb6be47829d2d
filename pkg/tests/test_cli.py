import json
import subprocess
import sys

import pytest

from hiram.cli import EXIT_CONTRACT, EXIT_IO, EXIT_OK, EXIT_USAGE, build_parser, main, resolve_train_config

from conftest import TINY_CONFIG

TINY_ARGS = [f"{k}={v}" for k, v in TINY_CONFIG.items()] + ["min_freq=1"]


def files(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.is_file()}


def test_synth_train_eval_pipeline(tmp_path, capsys):
    data, run = tmp_path / "data", tmp_path / "run"
    assert main(["synth", "relations=4", "train_bags=16", "test_bags=8", "filler_vocab=20",
                 "--seed", "3", "--out", str(data), "-q"]) == EXIT_OK
    assert {"train.jsonl", "test.jsonl", "types.jsonl", "meta.json"} <= set(files(data))
    assert main(["train", *TINY_ARGS, "--data", str(data), "--out", str(run), "--seed", "1", "-q"]) == EXIT_OK
    assert {"config.json", "metrics.jsonl", "best.bin", "best.json"} <= set(files(run))
    assert json.loads((run / "config.json").read_text())["seed"] == 1
    assert main(["eval", "--data", str(data), "--out", str(run), "--dump-align", "-q"]) == EXIT_OK
    rows = [json.loads(line) for line in (run / "summary.jsonl").read_text().splitlines()]
    assert {r["metric"] for r in rows} >= {"P@N", "AUC", "Hits@K"}
    assert (run / "predictions.jsonl").stat().st_size > 0
    assert (run / "alignments.jsonl").stat().st_size > 0
    pr = tmp_path / "pr_one.tsv"
    assert main(["export-pr", "--predictions", str(run / "predictions.jsonl"), "--setting", "all",
                 "--out", str(pr), "-q"]) == EXIT_OK
    assert pr.read_text() == (run / "pr_all.tsv").read_text()


def test_identical_command_lines_identical_outputs(tmp_path):
    outputs = []
    for name in ("a", "b"):
        data, run = tmp_path / name / "data", tmp_path / name / "run"
        main(["synth", "relations=4", "train_bags=12", "test_bags=6", "--seed", "2", "--out", str(data), "-q"])
        main(["train", *TINY_ARGS, "epochs=1", "--data", str(data), "--out", str(run), "-q"])
        main(["eval", "--data", str(data), "--out", str(run), "-q"])
        outputs.append((files(data), files(run)))
    assert outputs[0] == outputs[1]


def test_unknown_key_is_usage_error(tmp_path, capsys):
    assert main(["train", "not_a_key=3", "--data", str(tmp_path), "--out", str(tmp_path / "o")]) == EXIT_USAGE
    assert "not_a_key" in capsys.readouterr().err
    assert main(["synth", "bogus=1", "--out", str(tmp_path / "s")]) == EXIT_USAGE


def test_unknown_key_in_file_is_usage_error(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("train:\n  nope: 1\n")
    assert main(["train", "--config", str(cfg), "--data", str(tmp_path), "--out", str(tmp_path / "o")]) == EXIT_USAGE


def test_invalid_value_is_usage_error(tmp_path):
    assert main(["train", "lr=-1", "--data", str(tmp_path), "--out", str(tmp_path / "o")]) == EXIT_USAGE


def test_unknown_verb_and_preset_exit_nonzero():
    with pytest.raises(SystemExit) as exc:
        main(["fly"])
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["train", "--preset", "no-such"])
    assert exc.value.code == EXIT_USAGE


def test_missing_corpus_is_contract_or_io_error(tmp_path):
    code = main(["train", *TINY_ARGS, "--data", str(tmp_path / "absent"), "--out", str(tmp_path / "o"), "-q"])
    assert code in (EXIT_CONTRACT, EXIT_IO)


def test_precedence_file_preset_override_seed(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("train:\n  cfte: true\n  lr: 0.5\n  seed: 4\n  epochs: 3\n")
    args = build_parser().parse_intermixed_args(["train", "--config", str(cfg), "--preset", "no-cfte",
                                                 "epochs=7", "--seed", "9"])
    config = resolve_train_config(args)
    assert (config.cfte, config.lr, config.epochs, config.seed) == (False, 0.5, 7, 9)
    args = build_parser().parse_intermixed_args(["train", "--config", str(cfg), "--preset", "no-cfte", "cfte=true"])
    assert resolve_train_config(args).cfte is True


def test_flat_config_file(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("filters: 7\nguidance: false\n")
    config = resolve_train_config(build_parser().parse_intermixed_args(["train", "--config", str(cfg)]))
    assert (config.filters, config.guidance) == (7, False)


@pytest.mark.parametrize("preset,field,value", [("no-hierarchy", "hierarchy", False), ("no-cfte", "cfte", False),
                                                ("no-guidance", "guidance", False), ("type-concat", "type_repr", "concat")])
def test_presets_map_to_switches(preset, field, value):
    config = resolve_train_config(build_parser().parse_intermixed_args(["train", "--preset", preset]))
    assert getattr(config, field) == value


def test_gradcheck_verb_exits_zero(capsys):
    assert main(["gradcheck", "-q"]) == EXIT_OK
    assert "gradient checks passed at tol 0.0001" in capsys.readouterr().out


def test_module_entry_point_logs_config_and_seed(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hiram", "synth", "train_bags=4", "test_bags=2",
                           "--seed", "6", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "seed 6" in proc.stderr and "train_bags" in proc.stderr
