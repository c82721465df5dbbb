import json

import pytest

from minoverlap import cli, formats
from minoverlap.errors import IterationError


def write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def spheres(n=3, r=0.5, R=1.2, **kw):
    doc = {"kind": "spheres", "dimension": 2, "container": {"shape": "sphere", "semi_axes": [R]},
           "bodies": [{"radius": r}] * n, "objective": "LInf", "options": {"max_iter": 30}}
    doc.update(kw)
    return doc


def ellipsoids(n=2, R=4.0):
    return {"kind": "ellipsoids", "dimension": 3, "container": {"shape": "sphere", "semi_axes": [R]},
            "bodies": [{"axes": [1.0, 0.6, 0.5]}] * n, "options": {"max_iter": 5}}


def test_pack_spheres_with_svg(tmp_path):
    inst = write(tmp_path / "i.json", spheres())
    out, svg = tmp_path / "r.json", tmp_path / "r.svg"
    assert cli.main(["pack-spheres", inst, "--out", str(out), "--svg", str(svg), "--starts", "2"]) == 0
    doc = formats.load(out, "result")
    assert len(doc["bodies"]) == 3 and len(doc["starts"]) == 2
    assert svg.read_text().startswith("<?xml")


def test_pack_spheres_rerun_byte_identical(tmp_path):
    inst = write(tmp_path / "i.json", spheres())
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        assert cli.main(["pack-spheres", inst, "--out", str(p), "--seed", "5", "--no-timing"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_single_body_is_trivial(tmp_path):
    inst = write(tmp_path / "i.json", spheres(n=1))
    out = tmp_path / "r.json"
    assert cli.main(["pack-spheres", inst, "--out", str(out)]) == 0
    assert formats.load(out, "result")["objective"] == 0.0
    inst = write(tmp_path / "e.json", ellipsoids(n=1))
    assert cli.main(["pack-ellipsoids", inst, "--out", str(out)]) == 0
    assert formats.load(out, "result")["objective"] == 0.0


def test_empty_bodies_is_input_error(tmp_path):
    inst = write(tmp_path / "i.json", spheres(bodies=[]))
    assert cli.main(["pack-spheres", inst, "--out", str(tmp_path / "r.json")]) == 1


def test_unknown_field_and_usage_errors(tmp_path):
    inst = write(tmp_path / "i.json", spheres(extra=1))
    assert cli.main(["pack-spheres", inst, "--out", str(tmp_path / "r.json")]) == 1
    assert cli.main(["pack-spheres"]) == 1
    assert cli.main(["repro", "fig9", "--out", str(tmp_path)]) == 1
    assert cli.main(["pack-spheres", str(tmp_path / "missing.json"), "--out", "x"]) == 1


def test_body_too_large_is_infeasible(tmp_path):
    inst = write(tmp_path / "i.json", spheres(r=2.0, R=1.0))
    assert cli.main(["pack-spheres", inst, "--out", str(tmp_path / "r.json")]) == 2


def test_numerical_failure_exit(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise IterationError("subproblem solve failed")

    monkeypatch.setattr(cli, "multistart", boom)
    inst = write(tmp_path / "i.json", spheres())
    assert cli.main(["pack-spheres", inst, "--out", str(tmp_path / "r.json")]) == 3


def test_pack_ellipsoids_history(tmp_path):
    inst = write(tmp_path / "e.json", ellipsoids(n=3, R=1.8))
    out = tmp_path / "r.json"
    assert cli.main(["pack-ellipsoids", inst, "--out", str(out), "--history", str(tmp_path / "h.csv")]) == 0
    doc = formats.load(out, "result")
    assert len(doc["bodies"]) == 3
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0].startswith("iteration,") and len(lines) == len(doc["history"]) + 1


def test_pack_ellipsoids_loose_instance(tmp_path):
    inst = write(tmp_path / "e.json", ellipsoids(n=2, R=6.0))
    out = tmp_path / "r.json"
    assert cli.main(["pack-ellipsoids", inst, "--out", str(out), "--max-iter", "30"]) == 0
    assert formats.load(out, "result")["termination"] == "no_overlap"
    assert (tmp_path / "r.history.jsonl").exists()


def test_penalty_without_pairs_rejected(tmp_path):
    inst = write(tmp_path / "e.json", ellipsoids())
    assert cli.main(["pack-ellipsoids", inst, "--out", str(tmp_path / "r.json"), "--penalty", "100"]) == 1


def test_chromo_unknown_scenario(tmp_path):
    assert cli.main(["chromo", "--scenario", "tiny-cubic", "--out", str(tmp_path)]) == 1


def test_chromo_smoke(tmp_path):
    rc = cli.main(["chromo", "--scenario", "medium-ellipsoidal", "--trials", "2", "--max-iter", "1",
                   "--penalty", "100", "--lambda", "1.25", "--out", str(tmp_path)])
    assert rc == 0
    stats = json.loads((tmp_path / "stats.json").read_text())
    assert stats["trials"] == 2
    assert sorted(p.name for p in (tmp_path / "trials").iterdir()) == ["trial_0000.json", "trial_0001.json"]
    scn = formats.load(tmp_path / "scenario.json", "scenario")
    assert scn["penalty"] == 100.0


def test_repro_budget_exceeded(tmp_path):
    assert cli.main(["repro", "fig1", "--out", str(tmp_path), "--budget", "0.001"]) == 4
    rep = json.loads((tmp_path / "fig1_report.json").read_text())
    assert rep["budget_exceeded"] and not rep["passed"]


def test_workers_env(monkeypatch):
    monkeypatch.setenv(cli.WORKERS_ENV, "3")
    assert cli.default_workers() == 3
    monkeypatch.setenv(cli.WORKERS_ENV, "many")
    with pytest.raises(Exception):
        cli.default_workers()
