import csv
import filecmp

import numpy as np
import pytest

from animats.analysis import VALID_CODES
from animats.cli import main
from animats.genome import Genome, load_genomes, save_genomes
from animats.runner import (SNAPSHOT, ConfigError, ExperimentConfig, MissingArtifactError,
                            cli_analyze, cli_evolve, cli_sweep, cli_trial, dump_config,
                            parse_config, parse_overrides, replicate_seed, write_stats_tables)

from helpers import STILL_GATE, genome_from, random_genome

TINY = dict(replicates=2, population_size=6, generations=2, n_trials=2, checkpoint_every=1)


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(ln for ln in fh if not ln.startswith("#")))


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "single"
    cli_evolve(ExperimentConfig(output=str(out), seed=3, **TINY))
    return out


@pytest.fixture(scope="module")
def tiny_swarm_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "swarm"
    cli_evolve(ExperimentConfig(output=str(out), seed=3, condition="G_0.25", **TINY))
    return out


# --- configuration ----------------------------------------------------------------

def test_config_round_trip():
    cfg = ExperimentConfig(condition="G_0.50", penalty=0.1, seed=9)
    assert parse_config(dump_config(cfg)) == cfg


def test_config_comments_and_defaults():
    cfg = parse_config("# a comment\nseed = 4   # trailing\n\ncondition = G_1.00\n")
    assert cfg.seed == 4
    assert cfg.swarm_size == 72
    assert cfg.population_size == 100


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="line 2: unknown config key 'popsize'"):
        parse_config("seed = 1\npopsize = 3\n")
    with pytest.raises(ConfigError, match="unknown config key 'bogus'"):
        parse_overrides(["bogus=1"])


@pytest.mark.parametrize("text", ["seed = one", "condition = G_2", "replicates = 0",
                                  "population_size = 2", "seed 4"])
def test_invalid_values_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_replicate_seeds_distinct():
    seeds = {replicate_seed(0, r) for r in range(100)}
    assert len(seeds) == 100
    assert replicate_seed(5, 2) == replicate_seed(5, 2)


# --- evolve -----------------------------------------------------------------------

def test_evolve_layout(tiny_run):
    assert parse_config((tiny_run / SNAPSHOT).read_text()).seed == 3
    for r in range(2):
        rep = tiny_run / f"rep_{r:03d}"
        assert len(rows(rep / "stats.csv")) == 1 + 3
        assert len(load_genomes(rep / "final_population.txt")) == 6
        assert sorted(p.name for p in (rep / "checkpoints").iterdir())[0] == "gen_000000.txt"


def test_generation_zero_only(tmp_path):
    cli_evolve(ExperimentConfig(output=str(tmp_path), **dict(TINY, generations=0)))
    stats = rows(tmp_path / "rep_000" / "stats.csv")
    assert [r[0] for r in stats[1:]] == ["0"]


def test_runs_are_byte_identical(tmp_path, tiny_run):
    cli_evolve(ExperimentConfig(output=str(tmp_path), seed=3, workers=2, **TINY))
    for r in range(2):
        for name in ("stats.csv", "final_population.txt", "final_fitness.csv"):
            rep = f"rep_{r:03d}/{name}"
            assert filecmp.cmp(tiny_run / rep, tmp_path / rep, shallow=False)


def test_resume_refuses_mismatched_config(tiny_run):
    cfg = ExperimentConfig(output=str(tiny_run), seed=4, **TINY)
    with pytest.raises(ConfigError, match="seed: 3 != 4"):
        cli_evolve(cfg)
    # execution-only keys may differ
    cli_evolve(ExperimentConfig(output=str(tiny_run), seed=3, workers=3, **TINY))


def test_interrupted_replicate_resumes(tmp_path, tiny_run):
    cfg = ExperimentConfig(output=str(tmp_path), seed=3, **TINY)
    cli_evolve(cfg)
    rep = tmp_path / "rep_001"
    (rep / "final_population.txt").unlink()
    (rep / "checkpoints" / "gen_000002.txt").unlink()
    cli_evolve(cfg)
    assert filecmp.cmp(tiny_run / "rep_001" / "final_population.txt",
                       rep / "final_population.txt", shallow=False)


def test_full_swarm_condition(tmp_path):
    g = random_genome(1, gates=60)
    save_genomes(tmp_path / "g.txt", [g])
    cfg = ExperimentConfig(condition="G_1.00")
    log = cli_trial(tmp_path / "g.txt", cfg, tmp_path / "trial")
    assert log.swarm_size == 72


# --- sweep and trial --------------------------------------------------------------

def test_sweep_of_zero_gate_genome(tmp_path):
    save_genomes(tmp_path / "g.txt", [Genome.from_bytes([0] * 2000)])
    out = cli_sweep(tmp_path / "g.txt", ExperimentConfig(n_trials=2), tmp_path / "sweep.csv")
    table = rows(out)
    assert table[0] == ["label", "size", "fraction", "mean_F"]
    assert len(table) == 1 + 21 + 1
    assert [float(r[3]) for r in table[1:22]] == [0.0] * 21
    assert table[-1][0] == "AUC" and float(table[-1][3]) == 0.0


def test_sweep_reports_corrupt_genome(tmp_path):
    (tmp_path / "g.txt").write_text("00" * 1500 + "zz\n")
    with pytest.raises(ValueError, match="offset 3000"):
        cli_sweep(tmp_path / "g.txt", ExperimentConfig(), tmp_path / "sweep.csv")


def test_trial_outputs(tmp_path):
    save_genomes(tmp_path / "g.txt", [genome_from(STILL_GATE)])
    cli_trial(tmp_path / "g.txt", ExperimentConfig(condition="G_0.25"), tmp_path / "t")
    assert len(rows(tmp_path / "t" / "trial_log.csv")) == 1 + 500 * 18
    assert (tmp_path / "t" / "gates.jsonl").read_text().count("\n") == 1
    assert [float(r[1]) for r in rows(tmp_path / "t" / "fitness.csv")[1:]] == [0.0] * 18


def test_bad_genome_index(tmp_path):
    save_genomes(tmp_path / "g.txt", [genome_from(STILL_GATE)])
    with pytest.raises(IndexError, match="no index 4"):
        cli_trial(tmp_path / "g.txt", ExperimentConfig(), tmp_path / "t", index=4)


# --- analyze ----------------------------------------------------------------------

def test_heatmap_from_trial_dir(tmp_path):
    save_genomes(tmp_path / "g.txt", [random_genome(2, gates=60)])
    cli_trial(tmp_path / "g.txt", ExperimentConfig(condition="G_0.25"), tmp_path / "t")
    (out,) = cli_analyze([tmp_path / "t"], "heatmap", tmp_path / "a")
    grid = np.array([[int(v) for v in r[1:]] for r in rows(out)[1:]])
    assert grid.shape == (32, 32)
    assert grid.sum() == 500 * 18


def test_states_and_tpm_from_runs(tmp_path, tiny_run, tiny_swarm_run):
    (states,) = cli_analyze([tiny_run, tiny_swarm_run], "states", tmp_path, sizes=[1, 18])
    table = rows(states)
    assert table[0][1:] == list(VALID_CODES)
    # four replicates, each one trial at sizes 1 and 18
    counts = [sum(int(v) for v in r[1:]) for r in table[1:5]]
    assert counts == [499 * 19] * 4
    assert [r[0] for r in table[5:]] == ["mean", "ci_low", "ci_high"]
    (tpm,) = cli_analyze([tiny_run, tiny_swarm_run], "tpm", tmp_path, sizes=[1])
    body = rows(tpm)[1:]
    assert len(body) == 2 * 81
    assert {r[0] for r in body} == {"G_single", "G_0.25"}


def test_graph_per_genome(tmp_path, tiny_run):
    (out,) = cli_analyze([tiny_run], "graph", tmp_path)
    body = rows(out)[1:]
    assert len(body) == 2 * 6
    assert all(1 <= int(r[2]) <= 6 for r in body)


def test_stats_tables(tmp_path, tiny_run, tiny_swarm_run):
    outs = cli_analyze([tiny_run, tiny_swarm_run], "stats", tmp_path)
    assert [p.name for p in outs] == ["stats_p.csv", "stats_U.csv", "stats_kruskal.csv"]
    p_table = rows(outs[0])
    assert p_table[0] == ["", "G_single"]
    assert p_table[1][0] == "G_0.25"


def test_stats_table_layout(tmp_path):
    groups = {"a": [1, 2, 3], "b": [4, 5, 6], "c": [7, 8, 9]}
    p_path, u_path, kw_path = write_stats_tables(groups, tmp_path, seed=0)
    assert rows(u_path) == [["", "a", "b"], ["b", "0.0", ""], ["c", "0.0", "0.0"]]
    kw = rows(kw_path)[1]
    assert kw[0] == "a;b;c" and kw[2] == "2"
    assert float(kw[1]) == pytest.approx(7.2)


def test_missing_artifacts_listed(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(MissingArtifactError, match="trial_log.csv.*stats.csv"):
        cli_analyze([tmp_path / "empty"], "heatmap", tmp_path / "a")
    with pytest.raises(MissingArtifactError):
        cli_analyze([tmp_path / "nowhere"], "graph", tmp_path / "a")


def test_unknown_analysis(tmp_path):
    with pytest.raises(ValueError, match="unknown analysis"):
        cli_analyze([tmp_path], "bogus", tmp_path)


# --- command line -----------------------------------------------------------------

def test_cli_evolve_and_sweep(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["evolve", "--set", "replicates=1", "--set", "population_size=6",
                 "--set", "generations=1", "--set", "n_trials=1", "--seed", "2",
                 "-o", str(out)]) == 0
    assert (out / "rep_000" / "final_population.txt").exists()
    assert main(["sweep", str(out / "rep_000" / "final_population.txt"), "--set", "n_trials=1",
                 "-o", str(tmp_path / "s.csv")]) == 0
    assert len(rows(tmp_path / "s.csv")) == 23


def test_cli_errors_exit_2(tmp_path, capsys):
    assert main(["evolve", "--set", "nope=1", "-o", str(tmp_path)]) == 2
    assert "unknown config key 'nope'" in capsys.readouterr().err
    assert main(["analyze", str(tmp_path / "missing"), "--which", "graph"]) == 2
    assert "missing artifacts" in capsys.readouterr().err


def test_cli_config_file(tmp_path):
    (tmp_path / "exp.txt").write_text("replicates = 1\npopulation_size = 6\ngenerations = 0\n"
                                      "n_trials = 1\n")
    assert main(["evolve", "-c", str(tmp_path / "exp.txt"), "-o", str(tmp_path / "r")]) == 0
    assert parse_config((tmp_path / "r" / SNAPSHOT).read_text()).generations == 0
