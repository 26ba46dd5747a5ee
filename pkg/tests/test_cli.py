import json

import numpy as np
import pytest

from cdfkit.cli import cli_dispatch
from cdfkit.curvature import estimate_curvature
from cdfkit.dataset import PatchConfig, load_manifest
from cdfkit.energy import EnergyContext, EnergyWeights, total_energy
from cdfkit.field import DirectionField
from cdfkit.mesh import adjacency, face_normals, load_mesh, save_mesh
from cdfkit.metrics import EvalReport
from cdfkit.model import init_params, save_params
from cdfkit.solver import Anchor, SolverConfig, anchors_to_json

from conftest import disk_mesh, grid_mesh


@pytest.fixture(scope="module")
def disk_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("disk")
    mesh = disk_mesh(n_theta=24, n_r=5)
    (d / "mesh.obj").write_text(save_mesh(mesh))
    n = face_normals(mesh)[0]
    u0 = np.array([1.0, 0, 0]) - np.dot([1.0, 0, 0], n) * n
    u0 /= np.linalg.norm(u0)
    anchor = Anchor(face=0, u0=u0, v0=np.cross(n, u0))
    (d / "anchors.json").write_text(anchors_to_json([anchor]))
    return d, mesh


def small_config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({
        "samples_per_side": 21,
        "solver": {"max_iters": 600, "lambda_conj_final": 2000.0},
    }))
    return path


def test_unknown_flag_exits_1(capsys):
    assert cli_dispatch(["solve", "--bogus", "x"]) == 1
    assert "usage error" in capsys.readouterr().err


def test_unknown_command_exits_1():
    assert cli_dispatch(["frobnicate"]) == 1


def test_missing_file_exits_2(tmp_path, capsys):
    out = tmp_path / "field.json"
    code = cli_dispatch(
        ["solve", "--mesh", str(tmp_path / "missing.obj"), "--out", str(out)]
    )
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_solve_disk_anchor_energy(disk_files, tmp_path, capsys):
    d, mesh = disk_files
    out = tmp_path / "field.json"
    code = cli_dispatch([
        "solve", "--mesh", str(d / "mesh.obj"),
        "--anchors", str(d / "anchors.json"), "--out", str(out),
    ])
    assert code == 0
    logged = capsys.readouterr().out
    assert "total energy" in logged
    field = DirectionField.from_json(out.read_text())
    assert field.m == mesh.m
    ctx = EnergyContext(mesh, frame=estimate_curvature(mesh), adj=adjacency(mesh))
    assert total_energy(field, ctx, EnergyWeights()).total <= 1e-8


def test_gen_dataset_deterministic(tmp_path):
    cfg = small_config_file(tmp_path)
    args = ["gen-dataset", "--count", "2", "--seed", "7", "--config", str(cfg)]
    assert cli_dispatch(args + ["--out", str(tmp_path / "d1")]) == 0
    assert cli_dispatch(args + ["--out", str(tmp_path / "d2")]) == 0
    m1 = load_manifest(str(tmp_path / "d1"))
    m2 = load_manifest(str(tmp_path / "d2"))
    assert [s["checksum"] for s in m1["samples"]] == [
        s["checksum"] for s in m2["samples"]
    ]


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    d = tmp_path_factory.mktemp("ds")
    cfg = small_config_file(d)
    code = cli_dispatch([
        "gen-dataset", "--count", "2", "--seed", "3",
        "--config", str(cfg), "--out", str(d / "root"),
    ])
    assert code == 0
    return d / "root"


def test_eval_sample_against_own_gt(tiny_dataset, tmp_path):
    manifest = load_manifest(str(tiny_dataset))
    sample_dir = tiny_dataset / manifest["samples"][0]["dir"]
    out = tmp_path / "report.json"
    code = cli_dispatch([
        "eval", "--sample", str(sample_dir),
        "--field", str(sample_dir / "field.json"), "--out", str(out),
    ])
    assert code == 0
    report = EvalReport.from_json(out.read_text())
    assert report.theta == 0.0
    assert report.delta < 2.0


def test_train_and_predict(tiny_dataset, tmp_path):
    params_path = tmp_path / "params.json"
    code = cli_dispatch([
        "train", "--dataset", str(tiny_dataset), "--epochs", "2",
        "--lr", "1e-3", "--out", str(params_path),
    ])
    assert code == 0
    assert params_path.exists()
    assert (tmp_path / "params.json.log.csv").exists()

    manifest = load_manifest(str(tiny_dataset))
    sample_dir = tiny_dataset / manifest["samples"][0]["dir"]
    out = tmp_path / "pred.json"
    code = cli_dispatch([
        "predict", "--params", str(params_path),
        "--mesh", str(sample_dir / "mesh.obj"),
        "--strokes", str(sample_dir / "strokes.json"),
        "--out", str(out),
    ])
    assert code == 0
    field = DirectionField.from_json(out.read_text())
    mesh = load_mesh((sample_dir / "mesh.obj").read_text())
    assert field.m == mesh.m


def test_trace_quads_planarize_pipeline(tmp_path):
    mesh = grid_mesh(25, 25, height=lambda x, y: 0.3 * (x**2 - y**2))
    mesh_path = tmp_path / "saddle.obj"
    mesh_path.write_text(save_mesh(mesh))
    n = face_normals(mesh)[10]
    u0 = np.array([1.0, 0, 0]) - np.dot([1.0, 0, 0], n) * n
    u0 /= np.linalg.norm(u0)
    anchors_path = tmp_path / "anchors.json"
    anchors_path.write_text(
        anchors_to_json([Anchor(face=10, u0=u0, v0=np.cross(n, u0))])
    )
    field_path = tmp_path / "field.json"
    assert cli_dispatch([
        "solve", "--mesh", str(mesh_path), "--anchors", str(anchors_path),
        "--out", str(field_path),
    ]) == 0

    seeds_path = tmp_path / "seeds.json"
    seeds_path.write_text(json.dumps(
        {"seeds": [{"point": [0.0, 0.0, 0.0], "family": "u"},
                   {"point": [0.2, 0.1, 0.0], "family": "v"}]}
    ))
    lines_path = tmp_path / "lines.json"
    assert cli_dispatch([
        "trace", "--mesh", str(mesh_path), "--field", str(field_path),
        "--seeds", str(seeds_path), "--out", str(lines_path),
    ]) == 0
    lines = json.loads(lines_path.read_text())["polylines"]
    assert len(lines) == 2 and all(len(p) >= 2 for p in lines)

    quads_path = tmp_path / "layout.obj"
    assert cli_dispatch([
        "quads", "--mesh", str(mesh_path), "--field", str(field_path),
        "--spacing", "0.2", "--out", str(quads_path),
    ]) == 0

    flat_path = tmp_path / "flat.obj"
    assert cli_dispatch([
        "planarize", "--quads", str(quads_path), "--ref", str(mesh_path),
        "--out", str(flat_path),
    ]) == 0
    from cdfkit.quads import load_quad_obj, planarity

    before = planarity(load_quad_obj(quads_path.read_text()))
    after = planarity(load_quad_obj(flat_path.read_text()))
    assert after.eta_mean <= before.eta_mean


def test_predict_zero_params_runtime_error(tmp_path, disk_files):
    d, _ = disk_files
    params = init_params(0)
    params.layers["u3"]["W"][:] = 0.0
    params.layers["u3"]["b"][:] = 0.0
    path = tmp_path / "zero.json"
    save_params(params, str(path))
    code = cli_dispatch([
        "predict", "--params", str(path), "--mesh", str(d / "mesh.obj"),
        "--out", str(tmp_path / "f.json"),
    ])
    assert code == 2
