import json

import pytest

from fixtures import LOG2, two_loops
from kmsgraph import kgd
from kmsgraph.cli import CONFIG_ENV, CliConfig, beta_grid, main
from kmsgraph.constructor import ConstructionRecipe, backbone, exx1, realise
from kmsgraph.errors import ValidationError
from oracles import EXX1_CRITICAL_BETA


@pytest.fixture
def files(tmp_path):
    paths = {}
    for name, g in (("exx1", exx1()), ("two", two_loops()), ("backbone", backbone())):
        path = tmp_path / f"{name}.json"
        kgd.save(g, path)
        paths[name] = str(path)
    paths["dir"] = tmp_path
    return paths


class TestConstruct:
    def test_rev2_file_reloads_identically(self, tmp_path):
        out = tmp_path / "rev2.json"
        code = main(["construct", "--theorem", "rev2", "--entropy", str(LOG2),
                     "--interval", "[h,inf)", "--interval", "[h+1,h+2]", "-o", str(out)])
        assert code == 0
        expected = kgd.dumps(realise(ConstructionRecipe.parse("rev2", LOG2, ["[h,inf)", "[h+1,h+2]"])))
        assert out.read_text() == expected
        assert kgd.dumps(kgd.load(out)) == expected

    def test_infinitely_many_emitters(self, capsys):
        code = main(["construct", "--theorem", "intro", "--entropy", str(LOG2),
                     "--interval", "]h+1,h+2[", "--emitters", "inf"])
        assert code == 0
        document = json.loads(capsys.readouterr().out)
        assert document["graph"]["params"]["emitters"] in (None, "inf")

    def test_rev1_without_maximal_interval(self, capsys):
        code = main(["construct", "--theorem", "rev1", "--entropy", str(LOG2), "--interval", "]h+1,h+2["])
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_bad_emitter_count(self):
        assert main(["construct", "--theorem", "intro", "--entropy", "1", "--interval", "]2,3[",
                     "--emitters", "many"]) == 1


class TestAnalyze:
    def test_exx1_grid(self, files, capsys):
        assert main(["analyze", files["exx1"], "--beta-grid", "0.5:5:0.25"]) == 0
        reports = json.loads(capsys.readouterr().out)
        assert len(reports) == 19
        for r in reports:
            below = r["beta"] < EXX1_CRITICAL_BETA
            assert r["exists"] == ("No" if below else "Yes")
            if not below:
                assert len(r["boundary_rays"]) == 2

    def test_two_loops_text(self, files, capsys):
        assert main(["analyze", files["two"], "--beta", "0.6931", "--format", "text"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("beta=0.6931")

    def test_output_file(self, files):
        target = files["dir"] / "report.json"
        assert main(["analyze", files["exx1"], "--beta", "2.5", "-o", str(target)]) == 0
        assert json.loads(target.read_text())["beta"] == 2.5

    def test_needs_beta(self, files):
        assert main(["analyze", files["exx1"]]) == 1

    def test_malformed_graph_file(self, files, capsys):
        bad = files["dir"] / "bad.json"
        bad.write_text('{"version": 1,\n  "graph": [')
        assert main(["analyze", str(bad), "--beta", "1"]) == 1
        assert "line" in capsys.readouterr().err


class TestClassify:
    def test_two_points(self, files, capsys):
        assert main(["classify", files["exx1"], "--beta-grid", "1.5:2.5:1"]) == 0
        results = json.loads(capsys.readouterr().out)
        assert [r["value"] for r in results] == ["Recurrent", "Transient"]


class TestExport:
    def test_backbone_chain(self, files, capsys):
        assert main(["export", files["backbone"], "--dot", "--depth", "4"]) == 0
        dot = capsys.readouterr().out
        assert dot.lstrip().startswith("digraph")
        assert dot.count("->") == 3

    def test_explicit_graph_whole(self, files, capsys):
        assert main(["export", files["two"]]) == 0
        assert capsys.readouterr().out.count("->") >= 1

    def test_zero_width_rejected(self, files):
        assert main(["export", files["backbone"], "--width", "0"]) == 1


class TestVerify:
    def test_with_saved_report(self, files, capsys):
        report = files["dir"] / "r.json"
        assert main(["analyze", files["exx1"], "--beta-grid", "2:3:0.5", "-o", str(report)]) == 0
        assert main(["verify", "--graph", files["exx1"], "--beta", "2.5", "--report", str(report)]) == 0
        assert capsys.readouterr().out.rstrip().endswith("PASS")

    def test_tampered_report_fails(self, files, capsys):
        report = files["dir"] / "r.json"
        assert main(["analyze", files["exx1"], "--beta", "2.5", "-o", str(report)]) == 0
        data = json.loads(report.read_text())
        data["measure_label"] = "Conservative"
        report.write_text(json.dumps(data))
        assert main(["verify", "--graph", files["exx1"], "--beta", "2.5", "--report", str(report)]) == 1
        assert capsys.readouterr().out.rstrip().endswith("FAIL")

    def test_missing_beta_in_report(self, files):
        report = files["dir"] / "r.json"
        main(["analyze", files["exx1"], "--beta-grid", "2:3:0.5", "-o", str(report)])
        assert main(["verify", "--graph", files["exx1"], "--beta", "2.25", "--report", str(report)]) == 1


class TestConfig:
    def test_env_var_sets_format(self, files, monkeypatch, capsys):
        config = files["dir"] / "config.json"
        config.write_text(json.dumps({"format": "text", "depth": 50}))
        monkeypatch.setenv(CONFIG_ENV, str(config))
        assert main(["classify", files["two"], "--beta", "1"]) == 0
        assert capsys.readouterr().out.startswith("beta=1 ")

    def test_unknown_key(self, files):
        config = files["dir"] / "config.json"
        config.write_text('{"colour": "blue"}')
        assert main(["--config", str(config), "classify", files["two"], "--beta", "1"]) == 1

    def test_defaults_and_validation(self):
        assert CliConfig().budget().depth == 200
        with pytest.raises(ValidationError):
            CliConfig(format="xml")


class TestBetaGrid:
    def test_inclusive(self):
        assert beta_grid("0.5:1:0.25") == ["0.5", "0.75", "1.00"]

    @pytest.mark.parametrize("spec", ["1:0:0.1", "0:1:0", "a:b:c", "0:1"])
    def test_rejects(self, spec):
        with pytest.raises(ValidationError):
            beta_grid(spec)


def test_starved_budget_is_undecided(files, capsys):
    config = files["dir"] / "config.json"
    config.write_text('{"max_terms": 3}')
    code = main(["--config", str(config), "classify", files["exx1"], "--beta", "1.8296"])
    assert code == 2
    assert json.loads(capsys.readouterr().out)["value"] == "Indeterminate"
