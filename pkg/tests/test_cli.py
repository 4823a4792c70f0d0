import json

import numpy as np
import pytest

from rhwznw import cli, fuchs, wznw


def rank1_config():
    return cli.ProblemConfig(
        points=[-1.3, 0.0, 1.0],
        weights=np.array([[0.3], [0.45], [0.8], [0.45]]),
        conjugators=[np.eye(1, dtype=complex)] * 3,
        residues=np.array([[[0.3]], [[0.45]], [[0.8]]], dtype=complex),
    )


def rank2_config():
    ws = fuchs.build_weight_system([0.0, 1.0], [[0.15, 0.35], [0.2, 0.45], [0.3, 0.55]])
    return cli.ProblemConfig(
        points=[0.0, 1.0],
        weights=ws.weights,
        conjugators=fuchs.rank2_closure_conjugators(ws),
        residues=fuchs.rank2_rigid_residues(ws),
    )


def test_config_round_trip(tmp_path):
    cfg = rank2_config()
    cli.save_config(cfg, tmp_path / "a.json")
    cfg2 = cli.load_config(tmp_path / "a.json")
    cli.save_config(cfg2, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_config_missing_weights(tmp_path):
    (tmp_path / "bad.json").write_text(json.dumps({"points": [[0.0, 0.0]]}))
    rc = cli.main(["monodromy", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path)])
    assert rc == cli.EXIT_VALIDATION


def test_config_error_names_field(tmp_path, capsys):
    (tmp_path / "bad.json").write_text(json.dumps({"points": [[0.0, 0.0]]}))
    rc = cli.main(["monodromy", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path)])
    err = capsys.readouterr().err
    assert rc == cli.EXIT_VALIDATION
    assert "weights" in err


def test_monodromy_rank1(tmp_path):
    cfg = rank1_config()
    cli.save_config(cfg, tmp_path / "cfg.json")
    rc = cli.main(["monodromy", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path)])
    assert rc == 0
    rec = json.loads((tmp_path / "result.json").read_text())
    assert rec["command"] == "monodromy"
    assert rec["library_version"]
    assert rec["config_sha256"] == cli.config_hash(cfg)
    # loop transports carry exp(-2 pi i alpha); generators the inverse
    for i, a in enumerate((0.3, 0.45, 0.8)):
        lt = complex(*rec["loop_transports"][i][0][0])
        assert abs(lt - np.exp(-2j * np.pi * a)) < 1e-7
        gen = complex(*rec["generators"][i][0][0])
        assert abs(gen - np.exp(2j * np.pi * a)) < 1e-7
    assert rec["relation_residual"] <= 1e-7


def test_monodromy_solved_fixture(tmp_path):
    cfg = rank2_config()
    cli.save_config(cfg, tmp_path / "cfg.json")
    rc = cli.main(["monodromy", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path)])
    assert rc == 0
    rec = json.loads((tmp_path / "result.json").read_text())
    assert rec["relation_residual"] <= 1e-7


def test_rhsolve_rank1(tmp_path):
    cfg = rank1_config()
    cfg.residues = None
    cli.save_config(cfg, tmp_path / "cfg.json")
    rc = cli.main(["rhsolve", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path)])
    assert rc == 0
    rec = json.loads((tmp_path / "result.json").read_text())
    assert rec["success"] and rec["final_residual"] <= 1e-8
    # the residues file loads back as a valid config
    out_cfg = cli.load_config(tmp_path / "residues.json")
    assert out_cfg.residues is not None


def test_rhsolve_reducible_rejected(tmp_path, capsys):
    cfg = cli.ProblemConfig(
        points=[0.0, 1.0],
        weights=np.array([[0.1, 0.6], [0.4, 0.7], [0.5, 0.7]]),
        conjugators=[np.eye(2, dtype=complex)] * 2,
    )
    cli.save_config(cfg, tmp_path / "cfg.json")
    with pytest.warns(UserWarning):
        rc = cli.main(["rhsolve", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path)])
    assert rc == cli.EXIT_VALIDATION
    assert "reducible" in capsys.readouterr().err


def test_action_abelian_fixture(tmp_path):
    cfg = rank1_config()
    cli.save_config(cfg, tmp_path / "cfg.json")
    rc = cli.main(["action", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path)])
    assert rc == 0
    rec = json.loads((tmp_path / "result.json").read_text())
    ws = fuchs.build_weight_system(cfg.points, cfg.weights)
    oracle = wznw.abelian_action_closed_form(ws)
    assert abs(rec["value"] - oracle) <= 1e-3 * abs(oracle)
    lines = (tmp_path / "deltas.csv").read_text().splitlines()
    assert lines[0] == "delta,kinetic,topological,counterterm,total"
    assert len(lines) == 5


def test_action_non_regular_exit(tmp_path, monkeypatch):
    cfg = rank2_config()
    cli.save_config(cfg, tmp_path / "cfg.json")

    def refuse(*args, **kwargs):
        raise wznw.RegularLocusError("outside the regular locus")

    monkeypatch.setattr(wznw, "make_metric_field", refuse)
    rc = cli.main(["action", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path)])
    assert rc == cli.EXIT_REGULAR_LOCUS


def test_action_deterministic(tmp_path):
    cfg = rank1_config()
    cli.save_config(cfg, tmp_path / "cfg.json")
    for sub in ("r1", "r2"):
        rc = cli.main(
            ["action", "--config", str(tmp_path / "cfg.json"), "--seed", "3",
             "--out", str(tmp_path / sub)]
        )
        assert rc == 0
    assert (tmp_path / "r1" / "result.json").read_bytes() == (
        tmp_path / "r2" / "result.json"
    ).read_bytes()
    assert (tmp_path / "r1" / "deltas.csv").read_bytes() == (
        tmp_path / "r2" / "deltas.csv"
    ).read_bytes()


def test_rhsolve_non_convergence_exit(tmp_path):
    cfg = rank2_config()
    cfg.residues = None
    cfg.solver.max_iter = 1
    cfg.solver.restarts = 1
    cli.save_config(cfg, tmp_path / "cfg.json")
    rc = cli.main(["rhsolve", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path)])
    assert rc == cli.EXIT_NO_CONVERGENCE
    rec = json.loads((tmp_path / "result.json").read_text())
    assert not rec["success"]
    assert rec["final_residual"] > 0  # best iterate is still reported


def test_verify_suites(tmp_path):
    assert cli.main(["verify", "cholesky", "--seed", "2", "--count", "20",
                     "--out", str(tmp_path / "v1")]) == 0
    assert cli.main(["verify", "three-form", "--seed", "2", "--count", "20",
                     "--out", str(tmp_path / "v2")]) == 0
    rec = json.loads((tmp_path / "v2" / "result.json").read_text())
    assert rec["passed"] and rec["suite"] == "three-form"


def test_verify_unknown_suite(tmp_path, capsys):
    rc = cli.main(["verify", "bogus", "--out", str(tmp_path)])
    assert rc == cli.EXIT_VALIDATION
    assert "unknown suite" in capsys.readouterr().err


def test_seed_and_tol_overrides(tmp_path):
    cfg = rank1_config()
    cfg.residues = None
    cli.save_config(cfg, tmp_path / "cfg.json")
    rc = cli.main(
        ["rhsolve", "--config", str(tmp_path / "cfg.json"), "--seed", "9",
         "--tol", "1e-5", "--out", str(tmp_path)]
    )
    assert rc == 0
    rec = json.loads((tmp_path / "result.json").read_text())
    assert rec["seed"] == 9
