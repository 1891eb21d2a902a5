import json

import numpy as np
import pytest

from hilnas.calib import calibrate, calibration_batches, load_corpus, load_stats, split_corpus
from hilnas.checkpoint import load_checkpoint
from hilnas.cli import EXIT_CONFIG, EXIT_CONFLICT, EXIT_INFEASIBLE, EXIT_OK, main
from hilnas.analysis import PARETO_COLUMNS

CALIB = {"n_positions": 512, "seq_len": 128, "batch_size": 2}
FAST_SEARCH = {"stage1_budget": 16, "stage2_budget": 8, "batch_size": 4, "mc_samples": 16, "n_init": 4,
               "n_candidates": 64, "gp_restarts": 1, "cv_folds": 4}


def write_config(tmp_path, **kw):
    d = {"output_dir": "out", "calibration": CALIB, "swa_window": 256}
    d.update(kw)
    path = tmp_path / "run.json"
    path.write_text(json.dumps(d))
    return str(path)


def run(capsys, *argv):
    rc = main(list(argv))
    out = capsys.readouterr()
    return rc, out.out, out.err


def test_init_base_is_byte_identical(tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        d = tmp_path / name
        d.mkdir()
        cfg = write_config(d)
        assert run(capsys, "init-base", "--config", cfg)[0] == EXIT_OK
        outs.append(d / "out" / "base")
    files = sorted(f.name for f in outs[0].iterdir())
    assert files == sorted(f.name for f in outs[1].iterdir()) and len(files) > 10
    for f in files:
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()


def test_calibrate_matches_in_process_and_reuses(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert run(capsys, "init-base", "--config", cfg)[0] == EXIT_OK
    assert run(capsys, "calibrate", "--config", cfg)[0] == EXIT_OK
    stats_path = tmp_path / "out" / "calib.npz"
    stats, meta = load_stats(stats_path)
    assert meta["n_positions"] == "512"
    train, _ = split_corpus(load_corpus())
    direct = calibrate(load_checkpoint(tmp_path / "out" / "base"), calibration_batches(train, **CALIB))
    np.testing.assert_array_equal(stats.ffn_channel_energy, direct.ffn_channel_energy)
    np.testing.assert_array_equal(stats.layer_score, direct.layer_score)
    before = stats_path.stat().st_mtime_ns
    rc, out, _ = run(capsys, "calibrate", "--config", cfg)
    assert rc == EXIT_OK and "reusing" in out and stats_path.stat().st_mtime_ns == before


def test_stage1_search_writes_sixteen_records(tmp_path, capsys):
    cfg = write_config(tmp_path, latency="analytic", search=FAST_SEARCH)
    rc, out, _ = run(capsys, "search", "--config", cfg, "--stage", "1", "--trials", "16")
    assert rc == EXIT_OK and "16 trials" in out
    recs = [json.loads(l) for l in (tmp_path / "out" / "trials.jsonl").read_text().splitlines()]
    assert len(recs) == 16 and all(r["stage"] == 1 for r in recs)
    # no stage-2 trials yet: the pareto table is a bare header
    rc, out, _ = run(capsys, "report", "--config", cfg, "--kind", "pareto")
    assert rc == EXIT_OK and out == ",".join(PARETO_COLUMNS) + "\n"


def test_full_search_and_reports_are_reproducible(tmp_path, capsys):
    cfg = write_config(tmp_path, latency="analytic", search=FAST_SEARCH)
    assert run(capsys, "search", "--config", cfg)[0] == EXIT_OK
    pareto = (tmp_path / "out" / "pareto.csv").read_text()
    assert len(pareto.splitlines()) == 1 + 12
    for kind in ("pareto", "correlation", "rank"):
        rc1, out1, _ = run(capsys, "report", "--config", cfg, "--kind", kind)
        text1 = (tmp_path / "out" / f"{kind}.csv").read_bytes()
        rc2, out2, _ = run(capsys, "report", "--config", cfg, "--kind", kind)
        assert rc1 == rc2 == EXIT_OK and out1 == out2
        assert (tmp_path / "out" / f"{kind}.csv").read_bytes() == text1
    assert out1.splitlines()[0] == "early_step,late_step,tau,n"
    # resuming with the same budgets evaluates nothing new
    n = len((tmp_path / "out" / "trials.jsonl").read_text().splitlines())
    assert run(capsys, "search", "--config", cfg)[0] == EXIT_OK
    assert len((tmp_path / "out" / "trials.jsonl").read_text().splitlines()) == n


def test_seed_change_is_a_store_conflict(tmp_path, capsys):
    cfg = write_config(tmp_path, latency="analytic", search=FAST_SEARCH)
    assert run(capsys, "search", "--config", cfg, "--stage", "1", "--trials", "4")[0] == EXIT_OK
    rc, _, err = run(capsys, "search", "--config", cfg, "--stage", "1", "--trials", "4", "--seed", "9")
    assert rc == EXIT_CONFLICT and "config" in err


@pytest.mark.slow
def test_host_bench_default_contexts_and_appends(tmp_path, capsys):
    # default protocol contexts (1k/2k/4k, chunk 1024), trimmed run counts
    cfg = write_config(tmp_path, swa_window=1024, bench={"threads": 1, "measured_runs": 1, "decode_tokens": 2})
    run(capsys, "init-base", "--config", cfg)
    run(capsys, "calibrate", "--config", cfg)
    point = "L10-F2048-M1024-P=F.S.F.K.F.F.F.F.F.F"
    rc, out, _ = run(capsys, "bench", "--config", cfg, "--point", point)
    assert rc == EXIT_OK
    assert [l.split(":")[0] for l in out.splitlines()] == ["context 1024", "context 2048", "context 4096"]
    run(capsys, "bench", "--config", cfg, "--point", point)
    recs = [json.loads(l) for l in (tmp_path / "out" / "trials.jsonl").read_text().splitlines()]
    assert len(recs) == 6 and all(r["kind"] == "bench" and r["point"] == point for r in recs)


@pytest.mark.parametrize("point", ["L10-F2048-M1024-P=F.K.K.K.F.F.F.F.F.F", "L9-F2048-M1024-P=F.F.F.F.F.F.F.F.F"])
def test_bench_rejects_points_outside_the_space(tmp_path, capsys, point):
    cfg = write_config(tmp_path, latency="analytic")
    rc, _, err = run(capsys, "bench", "--config", cfg, "--point", point)
    assert rc == EXIT_INFEASIBLE and err.startswith("error:")
    assert not (tmp_path / "out" / "trials.jsonl").exists()


def test_config_errors(tmp_path, capsys):
    assert run(capsys, "search", "--config", str(tmp_path / "missing.json"))[0] == EXIT_CONFIG
    assert run(capsys, "search", "--config", write_config(tmp_path, bogus=1))[0] == EXIT_CONFIG
    assert run(capsys, "report", "--config", write_config(tmp_path, latency="analytic"))[0] == EXIT_CONFIG
    assert run(capsys, "bench", "--config", write_config(tmp_path), "--point", "nonsense")[0] == EXIT_CONFIG
