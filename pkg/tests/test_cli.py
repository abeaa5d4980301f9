import json
from pathlib import Path

import pytest

from timelinekit.cli import build_parser, load_config, main
from timelinekit.detsim import STANDARD
from timelinekit.errors import SchemaError

DATA = {"events": [{"time": 1, "label": "Alpha"}, {"time": 2, "label": "Beta", "icon": "star"},
                   {"time": 3, "label": "Gamma"}]}


def run(*argv):
    assert main([str(a) for a in argv]) == 0


def _files(root: Path):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def _all_verbs(root: Path, seed=5):
    """Run every verb once under ``root``; paths are relative so outputs can be compared byte for byte."""
    gen = root / "gen"
    run("--seed", seed, "synth-gen", "--n", 2, "--out", gen)
    tl = gen / "timeline_0000.json"
    run("--seed", seed, "detect-sim", tl, "--out", root / "d.json")
    run("reconstruct", root / "d.json", "--out", root / "rep.json", "--trace")
    run("extract", root / "rep.json", "--timeline", tl, "--no-refine", "--out", root / "tpl.json")
    (root / "data.json").write_text(json.dumps(DATA))
    run("render", root / "tpl.json", root / "data.json", "--out", root / "out" / "r")
    run("evaluate", "--pred", root / "d.json", "--gt", tl, "--out", root / "scores.json")
    run("--seed", seed, "evaluate", "--n", 2, "--runs", 1, "--stages", "Raw,+NMM,+RR", "--out", root / "gain.csv")
    run("--seed", seed, "pipeline", "--no-refine", "--out", root / "pipe")


@pytest.fixture(scope="module")
def twice(tmp_path_factory):
    a, b = tmp_path_factory.mktemp("a"), tmp_path_factory.mktemp("b")
    _all_verbs(a)
    _all_verbs(b)
    return a, b


def test_outputs_bit_identical(twice):
    a, b = twice
    fa, fb = _files(a), _files(b)
    assert fa.keys() == fb.keys()
    for name in fa:
        assert fa[name] == fb[name], name


@pytest.mark.parametrize("name", ["gen/timeline_0000.png", "rep.json", "tpl.json", "out/r.svg", "out/r.png",
                                  "scores.json", "gain.csv", "pipe/rendered.png", "pipe/summary.json",
                                  "rep.trace.json"])
def test_expected_outputs_exist(twice, name):
    assert (twice[0] / name).stat().st_size > 0


def test_seed_changes_output(tmp_path):
    run("--seed", 1, "synth-gen", "--n", 1, "--out", tmp_path / "a")
    run("--seed", 2, "synth-gen", "--n", 1, "--out", tmp_path / "b")
    assert (tmp_path / "a/timeline_0000.png").read_bytes() != (tmp_path / "b/timeline_0000.png").read_bytes()


def test_global_flags_after_verb(tmp_path):
    a = build_parser().parse_args(["synth-gen", "--out", "x", "--seed", "9", "--jobs", "2"])
    assert (a.seed, a.jobs) == (9, 2)
    assert build_parser().parse_args(["--seed", "4", "synth-gen", "--out", "x"]).seed == 4


def test_parallel_synth_matches_serial(tmp_path):
    run("synth-gen", "--n", 3, "--out", tmp_path / "s")
    run("--jobs", 2, "synth-gen", "--n", 3, "--out", tmp_path / "p")
    assert _files(tmp_path / "s") == _files(tmp_path / "p")


@pytest.mark.parametrize("suffix, text", [
    (".toml", '[noise]\ndup_rate = 0.0\n[repair]\nnms_iou = 0.4\n'),
    (".json", '{"noise": {"dup_rate": 0.0}, "repair": {"nms_iou": 0.4}}'),
])
def test_config_formats(tmp_path, suffix, text):
    p = tmp_path / f"c{suffix}"
    p.write_text(text)
    cfg = load_config(str(p))
    assert cfg.noise.dup_rate == 0.0 and cfg.repair.nms_iou == 0.4


def test_config_defaults():
    assert load_config(None).noise == STANDARD


@pytest.mark.parametrize("text", ["[noise\n", '{"noise": {"dup_rate": "lots"}}', "[1, 2]"])
def test_bad_config(tmp_path, text):
    p = tmp_path / ("c.toml" if text.startswith("[noise") else "c.json")
    p.write_text(text)
    with pytest.raises(SchemaError):
        load_config(str(p))


def test_errors_exit_nonzero(tmp_path, capsys):
    (tmp_path / "bad.json").write_text("{}")
    assert main(["render", str(tmp_path / "missing.json"), str(tmp_path / "bad.json"), "--out", str(tmp_path / "o")]) == 1
    assert "error" in capsys.readouterr().err


def test_trace_goes_to_stderr(tmp_path, capsys):
    run("synth-gen", "--n", 1, "--out", tmp_path)
    capsys.readouterr()
    run("detect-sim", tmp_path / "timeline_0000.json", "--out", tmp_path / "d.json")
    run("--trace", "reconstruct", tmp_path / "d.json", "--out", tmp_path / "r.json")
    assert "dedup by" in capsys.readouterr().err


def test_extract_runs_hook_commands(tmp_path):
    run("synth-gen", "--n", 1, "--out", tmp_path)
    tl = tmp_path / "timeline_0000.json"
    run("detect-sim", tl, "--out", tmp_path / "d.json", "--config", _zero_noise(tmp_path))
    run("extract", tmp_path / "d.json", "--timeline", tl, "--no-refine", "--ocr-cmd", "echo hello",
        "--font-cmd", "echo Sans", "--out", tmp_path / "t.json")
    from timelinekit.template import load_template
    texts = [u for u in load_template(tmp_path / "t.json").updatable if u.font is not None]
    assert texts and all(u.text.startswith("hello") and u.font.family.startswith("Sans") for u in texts)


def _zero_noise(tmp_path):
    p = tmp_path / "zero.json"
    p.write_text(json.dumps({"noise": {"dup_rate": 0, "drop_rate": 0, "misclass_rate": 0, "jitter_px": 0,
                                       "mask_coarsen_px": 0}}))
    return p
