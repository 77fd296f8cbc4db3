import json

import pytest
from hypothesis import given, strategies as st

from siwalk import cli
from siwalk.cli import EnsembleResult, ExperimentConfig, Row, emit, parse, run_experiment
from siwalk.stats import wilson_interval

SMALL = {
    "walk-return": ((2**8,), 10),
    "embed-moments": ((256, 512), 6),
    "defocus-corollary": ((2**10, 2**11, 2**12), 300),
    "defocus-embedded": ((2**10,), 8),
    "bridge-stats": ((256,), 8),
    "kset-scan": ((256, 1024), 8),
    "counterexample": ((2**10, 2**12), 200),
}


@pytest.mark.parametrize("name", cli.EXPERIMENTS)
def test_experiments_are_deterministic_across_workers(name):
    ns, trials = SMALL[name]
    out = [emit(run_experiment(ExperimentConfig(name, ns, trials, seed=5, workers=w))) for w in (1, 1, 3)]
    assert out[0] == out[1] == out[2]
    res = parse(out[0])
    assert res.rows
    for r in res.rows:
        assert r.ci_low <= r.estimate <= r.ci_high
        assert (r.ci_low, r.ci_high) == wilson_interval(r.count, r.trials)
        assert 0 <= r.count <= r.trials


def test_walk_return_has_one_row_per_trial():
    res = run_experiment(ExperimentConfig("walk-return", (2**10,), 10, seed=1))
    assert len(res.rows) == 10
    assert [r.statistic for r in res.rows] == [f"return_in_window[{i}]" for i in range(10)]


def test_lazy_decay_experiment_reports_slope():
    res = run_experiment(ExperimentConfig("defocus-corollary", tuple(2**e for e in range(10, 19, 2)), 3000, a=0.5))
    assert "decay_slope" in res.fits
    assert res.row(2**10, "zero_at_n").trials == 3000


def test_trial_alone_equals_trial_in_ensemble():
    one = run_experiment(ExperimentConfig("walk-return", (256,), 12, seed=2)).rows
    from siwalk.walk3d import return_window_counts

    assert one[7].count == int(return_window_counts(256, [7], 2)[0] > 0)


@pytest.mark.parametrize("bad", [
    dict(trials=0),
    dict(n=(2,)),
    dict(experiment="nope"),
    dict(a=1.5),
    dict(epsilon=0.05),
    dict(rho=0.0),
    dict(workers=0),
    dict(format="xml"),
    dict(experiment="kset-scan", n=(101,)),
])
def test_config_validation(bad):
    base = dict(experiment="counterexample", n=(1024,), trials=5)
    base.update(bad)
    with pytest.raises(cli.ConfigError):
        run_experiment(ExperimentConfig(**base))


def test_emit_empty_and_schema():
    assert emit(EnsembleResult([])) == b"experiment,n,statistic,estimate,ci_low,ci_high,count,trials,seed\n"
    one = EnsembleResult([Row.of("counterexample", 1024, "zero_at_n", 3, 10, 1)])
    lines = emit(one).decode().splitlines()
    assert len(lines) == 2 and len(lines[1].split(",")) == 9
    data = json.loads(emit(one, "json"))
    assert list(data[0]) == list(cli.COLUMNS)


rows = st.builds(
    lambda exp, n, stat, trials, frac, seed: Row.of(exp, n, stat, int(frac * trials), trials, seed),
    st.sampled_from(cli.EXPERIMENTS),
    st.integers(4, 2**30),
    st.from_regex(r"[a-z_]{1,12}(\[[0-9]{1,4}\])?", fullmatch=True),
    st.integers(1, 10**9),
    st.floats(0, 1),
    st.integers(0, 2**63),
)


@given(st.lists(rows, max_size=20), st.sampled_from(cli.FORMATS))
def test_emit_parse_round_trip(rs, fmt):
    first = emit(EnsembleResult(rs), fmt)
    back = parse(first, fmt)
    assert back.rows == rs
    assert emit(back, fmt) == first


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# small run\nexperiment = counterexample\nn = 2^10, 2^11\ntrials = 50  # few\nseed = 4\n")
    c = cli.config_from_args(["--config", str(cfg), "--trials", "70"])
    assert c.experiment == "counterexample"
    assert c.n == (1024, 2048) and c.trials == 70 and c.seed == 4


def test_main_exit_codes(tmp_path, capsys, monkeypatch):
    out = tmp_path / "r.csv"
    assert cli.main(["counterexample", "--n", "1024", "--trials", "40", "--seed", "1", "--out", str(out)]) == 0
    assert out.read_bytes().startswith(b"experiment,")
    assert cli.main(["counterexample", "--n", "1024", "--trials", "0"]) == 2
    assert cli.main(["--n", "1024", "--trials", "3"]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert cli.main(["counterexample", "--config", str(bad)]) == 2
    monkeypatch.setenv("SIWALK_MEM_CAP_BYTES", "1024")
    assert cli.main(["walk-return", "--n", "4096", "--trials", "2"]) == 3


def test_main_writes_json_to_stdout(capsysbinary):
    assert cli.main(["defocus-corollary", "--n", "2^10,2^12,2^14", "--trials", "500", "--format", "json"]) == 0
    captured = capsysbinary.readouterr()
    data = json.loads(captured.out)
    assert len(data) == 3
    assert b"decay_slope" in captured.err


def test_parse_n_list():
    assert cli.parse_n_list("2^10, 4096,") == (1024, 4096)
    with pytest.raises(cli.ConfigError):
        cli.parse_n_list("ten")
