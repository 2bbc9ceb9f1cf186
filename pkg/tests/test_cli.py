"""CLI surface: subcommands, config files, flag overrides."""

import numpy as np
import pytest

from vocplan.cli import main, parse_config_file
from vocplan.harness import read_csv


class TestBench:
    def test_bandit_tree_writes_csv(self, tmp_path, capsys):
        out = tmp_path / "r.csv"
        rc = main(
            [
                "bench", "bandit-tree", "--depth", "2", "--p", "1.0",
                "--budgets", "4,8", "--instances", "3",
                "--policies", "voc-phi,uct", "--seed", "5", "--out", str(out),
            ]
        )
        assert rc == 0
        records = read_csv(out)
        assert {r.policy for r in records} == {"voc-phi", "uct"}
        assert "simple_regret" in capsys.readouterr().out

    def test_peg_bench(self, tmp_path, capsys):
        out = tmp_path / "p.csv"
        rc = main(
            [
                "bench", "peg", "--pegs", "7", "--budgets", "4",
                "--instances", "2", "--policies", "uct", "--seed", "1",
                "--out", str(out),
            ]
        )
        assert rc == 0
        records = read_csv(out)
        assert all(r.metric == "pegs_remaining" for r in records)

    def test_config_file_with_flag_override(self, tmp_path):
        cfg = tmp_path / "bench.cfg"
        cfg.write_text(
            "depth = 2\n"
            "p = 1.0\n"
            "budgets = 4\n"
            "instances = 2\n"
            "policies = uct\n"
            "seed = 9\n",
            encoding="utf-8",
        )
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["bench", "bandit-tree", "--config", str(cfg), "--out", str(out1)]) == 0
        # explicit flag overrides the file value
        assert (
            main(
                ["bench", "bandit-tree", "--config", str(cfg), "--seed", "10", "--out", str(out2)]
            )
            == 0
        )
        a, b = read_csv(out1), read_csv(out2)
        assert {r.seed for r in a} != {r.seed for r in b}

    def test_unknown_policy_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="unknown policy"):
            main(["bench", "bandit-tree", "--policies", "alphago", "--instances", "1"])

    def test_rerun_byte_identical(self, tmp_path):
        args = [
            "bench", "bandit-tree", "--depth", "2", "--p", "0.8",
            "--budgets", "3,6", "--instances", "3",
            "--policies", "thompson", "--seed", "12",
        ]
        p1, p2 = tmp_path / "x.csv", tmp_path / "y.csv"
        main(args + ["--out", str(p1)])
        main(args + ["--out", str(p2)])
        assert p1.read_bytes() == p2.read_bytes()


class TestGrid:
    def test_grid_from_config(self, tmp_path, capsys):
        cfg = tmp_path / "grid.cfg"
        cfg.write_text(
            "env = bandit-tree\n"
            "depth = 2\n"
            "p = 1.0\n"
            "budgets = 6\n"
            "instances = 2\n"
            "policies = uct\n"
            "seed = 3\n"
            "grid.uct_c = 0.5,2.0\n",
            encoding="utf-8",
        )
        assert main(["grid", "--config", str(cfg)]) == 0
        out = capsys.readouterr().out
        assert "best per policy" in out
        assert "uct" in out

    def test_grid_requires_axes(self, tmp_path):
        cfg = tmp_path / "grid.cfg"
        cfg.write_text("env = bandit-tree\ninstances = 1\npolicies = uct\n", encoding="utf-8")
        with pytest.raises(ValueError, match="grid"):
            main(["grid", "--config", str(cfg)])


class TestConfigParsing:
    def test_comments_and_dashes(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text(
            "# a comment\n"
            "uct-c = 2.0  # trailing comment\n"
            "\n"
            "depth = 5\n",
            encoding="utf-8",
        )
        values = parse_config_file(cfg)
        assert values == {"uct_c": "2.0", "depth": "5"}

    def test_bad_line_rejected(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("just some words\n", encoding="utf-8")
        with pytest.raises(ValueError, match="key = value"):
            parse_config_file(cfg)


def test_selftest_command(capsys):
    rc = main(["selftest"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "checks passed" in out
    assert "[PASS]" in out
