"""CLI harness: config handling, artifact emission, determinism, and the
exit-code contract."""

import json
import os

import pytest

from santalo.cli import ConfigError, main
from santalo.instances import generate_instance


def run_cli(tmp_path, *argv):
    return main(list(argv))


class TestInstanceDeterminism:
    def test_same_seed_same_hash(self):
        a = generate_instance("unconditional-mixed", seed=42, k=3, n=1)
        b = generate_instance("unconditional-mixed", seed=42, k=3, n=1)
        assert a.instance_hash == b.instance_hash

    def test_different_seed_different_hash(self):
        a = generate_instance("unconditional-mixed", seed=42, k=3, n=1)
        b = generate_instance("unconditional-mixed", seed=43, k=3, n=1)
        assert a.instance_hash != b.instance_hash

    def test_gaussian_triple_fixture(self):
        inst = generate_instance("gaussian-triple", seed=0)
        assert len(inst.densities) == 3

    def test_unconditional_generator_exact_symmetry(self):
        inst = generate_instance("unconditional-mixed", seed=7, k=3, n=2)
        for f in inst.nonneg_fns():
            assert f.is_unconditional(tol=0.0)

    def test_invalid_family(self):
        with pytest.raises(ValueError):
            generate_instance("no-such-family", seed=0)


class TestRunExperiments:
    def test_bsunc_run_emits_artifacts(self, tmp_path):
        out = str(tmp_path / "run")
        code = main(["verify-bsunc", "--seed", "1", "--count", "2",
                     "--out", out])
        assert code == 0
        assert os.path.exists(out + ".reports.jsonl")
        assert os.path.exists(out + ".summary.csv")
        assert os.path.exists(out + ".slack.png")
        with open(out + ".reports.jsonl") as fh:
            lines = fh.readlines()
        assert len(lines) == 2
        rep = json.loads(lines[0])
        assert rep["pass"] is True and rep["mode"] == "theorem"
        with open(out + ".summary.csv") as fh:
            assert len(fh.readlines()) == 3     # header + count rows

    def test_reports_byte_deterministic(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = str(tmp_path / name)
            assert main(["verify-displacement", "--seed", "5", "--count",
                         "2", "--out", out]) == 0
            with open(out + ".reports.jsonl", "rb") as fh:
                outs.append(fh.read())
        assert outs[0] == outs[1]

    def test_iterate_pair_trace(self, tmp_path):
        out = str(tmp_path / "it")
        code = main(["iterate-pair", "--out", out,
                     "--override", "steps=6"])
        assert code == 0
        assert os.path.exists(out + ".trace.csv")
        assert os.path.exists(out + ".trace.png")
        with open(out + ".trace.csv") as fh:
            rows = fh.readlines()
        assert rows[0].strip() == "step,bs,j_sq,delta_quad"
        bs = [float(r.split(",")[1]) for r in rows[1:]]
        assert all(b2 >= b1 - 1e-6 for b1, b2 in zip(bs, bs[1:]))

    def test_search_no_finding_exits_zero(self, tmp_path):
        out = str(tmp_path / "s")
        code = main(["search", "--seed", "0", "--count", "3", "--out", out])
        assert code == 0
        with open(out + ".reports.jsonl") as fh:
            reps = [json.loads(l) for l in fh]
        assert all(r["mode"] == "conjecture" for r in reps)

    def test_talagrand_fixture(self, tmp_path):
        out = str(tmp_path / "t")
        code = main(["verify-talagrand", "--out", out])
        assert code == 0
        with open(out + ".reports.jsonl") as fh:
            rep = json.loads(fh.readline())
        assert rep["slack"] == pytest.approx(5.6e-3, abs=1.5e-3)


class TestConfigErrors:
    def test_unknown_field_reported_with_path(self, tmp_path, capsys):
        cfgp = tmp_path / "c.json"
        cfgp.write_text(json.dumps({"bogus": 1}))
        code = main(["verify-bsunc", "--config", str(cfgp)])
        assert code == 1
        assert "config.bogus" in capsys.readouterr().err

    def test_bad_count(self, tmp_path, capsys):
        code = main(["verify-bsunc", "--count", "0",
                     "--out", str(tmp_path / "x")])
        assert code == 1
        assert "config.count" in capsys.readouterr().err

    def test_malformed_override(self, tmp_path, capsys):
        code = main(["verify-bsunc", "--override", "steps",
                     "--out", str(tmp_path / "x")])
        assert code == 1
        assert "override" in capsys.readouterr().err

    def test_invalid_family_in_config(self, tmp_path, capsys):
        cfgp = tmp_path / "c.json"
        cfgp.write_text(json.dumps({"family": "nonsense"}))
        code = main(["verify-bsunc", "--config", str(cfgp),
                     "--out", str(tmp_path / "x")])
        assert code == 1
        assert "config.family" in capsys.readouterr().err

    def test_cell_cap_env(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("SANTALO_MAX_CELLS", "10")
        code = main(["verify-bsunc", "--out", str(tmp_path / "x")])
        assert code == 1
        assert "SANTALO_MAX_CELLS" in capsys.readouterr().err
