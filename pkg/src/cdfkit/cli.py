"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 runtime error. All commands are
deterministic given their seeds. ``CDF_LOG`` sets the log level.
"""

from __future__ import annotations

import json
import logging
import os
import sys

import click
import numpy as np

from .curvature import estimate_curvature
from .dataset import PatchConfig, build_dataset, read_sample
from .field import DirectionField
from .mesh import load_mesh
from .metrics import evaluate as evaluate_sample
from .model import TrainConfig, load_params, predict, save_params, train, write_train_csv
from .quads import load_quad_obj, planarize, save_quad_obj, trace_quad_layout
from .solver import SolverConfig, anchors_from_json, solve_cdf
from .strokes import TraceConfig, assign_segments, strokes_from_json, trace_streamline

log = logging.getLogger("cdfkit")


def _read(path: str) -> str:
    with open(path) as fh:
        return fh.read()


def _write(path: str, text: str):
    with open(path, "w") as fh:
        fh.write(text)


@click.group()
def cli():
    """Conjugate direction fields for planar-quad mesh design."""
    pass


@cli.command("gen-dataset")
@click.option("--count", type=int, required=True, help="Training samples to generate.")
@click.option("--seed", type=int, default=0)
@click.option("--out", required=True, help="Dataset root directory.")
@click.option("--config", default=None, help="JSON file of PatchConfig overrides.")
@click.option("--val", type=int, default=0, help="Validation samples.")
@click.option("--test", type=int, default=0, help="Test samples.")
def gen_dataset_cmd(count, seed, out, config, val, test):
    """Generate a reproducible synthetic patch dataset."""
    cfg = PatchConfig()
    if config is not None:
        overrides = json.loads(_read(config))
        solver_overrides = overrides.pop("solver", None)
        cfg = PatchConfig(**overrides)
        if solver_overrides is not None:
            cfg.solver = SolverConfig(**solver_overrides)
    splits = {"train": count}
    if val:
        splits["val"] = val
    if test:
        splits["test"] = test
    manifest = build_dataset(out, seed=seed, config=cfg, splits=splits)
    click.echo(f"wrote {len(manifest['samples'])} samples to {out}")


def _solver_config(iters, lambda1, lambda2, lambda3, lambda4, lambda_conj):
    from .energy import EnergyWeights

    cfg = SolverConfig(
        weights=EnergyWeights(
            lambda1=lambda1, lambda2=lambda2, lambda3=lambda3, lambda4=lambda4
        )
    )
    if iters is not None:
        cfg.max_iters = iters
    if lambda_conj is not None:
        cfg.lambda_conj_final = lambda_conj
    return cfg


@cli.command("solve")
@click.option("--mesh", "mesh_path", required=True)
@click.option("--strokes", "strokes_path", default=None)
@click.option("--anchors", "anchors_path", default=None)
@click.option("--out", required=True)
@click.option("--iters", type=int, default=None)
@click.option("--lambda1", type=float, default=1.0)
@click.option("--lambda2", type=float, default=1.0)
@click.option("--lambda3", type=float, default=1.0)
@click.option("--lambda4", type=float, default=1.0)
@click.option("--lambda-conj", type=float, default=None)
def solve_cmd(mesh_path, strokes_path, anchors_path, out, iters,
              lambda1, lambda2, lambda3, lambda4, lambda_conj):
    """Optimize a conjugate direction field on a mesh."""
    mesh = load_mesh(_read(mesh_path))
    frame = estimate_curvature(mesh)
    anchors = anchors_from_json(_read(anchors_path)) if anchors_path else []
    assignment = None
    if strokes_path:
        strokes = strokes_from_json(_read(strokes_path))
        assignment = assign_segments(mesh, [s.points for s in strokes])
    cfg = _solver_config(iters, lambda1, lambda2, lambda3, lambda4, lambda_conj)
    field, trace = solve_cdf(mesh, frame, anchors=anchors, strokes=assignment, config=cfg)
    _write(out, field.to_json())
    click.echo(f"solved in {len(trace)} iterations, total energy {trace[-1].total:.6g}")


@cli.command("trace")
@click.option("--mesh", "mesh_path", required=True)
@click.option("--field", "field_path", required=True)
@click.option("--seeds", "seeds_path", required=True,
              help='JSON {"seeds": [{"point", "family", "sign"?}]}')
@click.option("--out", required=True)
def trace_cmd(mesh_path, field_path, seeds_path, out):
    """Trace field streamlines from seed points."""
    from .strokes import SurfaceLocator

    mesh = load_mesh(_read(mesh_path))
    field = DirectionField.from_json(_read(field_path))
    seeds = json.loads(_read(seeds_path))["seeds"]
    locator = SurfaceLocator(mesh)
    cfg = TraceConfig(max_length=2.0 * mesh.bbox_diagonal())
    polylines = []
    for seed in seeds:
        point, face, _ = locator.snap(np.asarray(seed["point"], dtype=np.float64))
        res = trace_streamline(
            field, mesh, face, point, seed.get("family", "u"),
            int(seed.get("sign", 1)), cfg,
        )
        polylines.append(np.asarray(res.points).tolist())
    _write(out, json.dumps({"polylines": polylines}, sort_keys=True))
    click.echo(f"traced {len(polylines)} streamlines")


@cli.command("quads")
@click.option("--mesh", "mesh_path", required=True)
@click.option("--field", "field_path", required=True)
@click.option("--spacing", type=float, required=True)
@click.option("--out", required=True)
def quads_cmd(mesh_path, field_path, spacing, out):
    """Extract a quad layout from a solved field."""
    from .quads import planarity

    mesh = load_mesh(_read(mesh_path))
    field = DirectionField.from_json(_read(field_path))
    layout = trace_quad_layout(field, mesh, spacing)
    _write(out, save_quad_obj(layout))
    rep = planarity(layout)
    click.echo(
        f"{layout.count} quads, eta mean {rep.eta_mean:.4g} max {rep.eta_max:.4g}"
    )


@cli.command("planarize")
@click.option("--quads", "quads_path", required=True)
@click.option("--ref", "ref_path", default=None)
@click.option("--iters", type=int, default=100)
@click.option("--out", required=True)
def planarize_cmd(quads_path, ref_path, iters, out):
    """Planarize a quad layout, optionally against a reference surface."""
    quad = load_quad_obj(_read(quads_path))
    reference = load_mesh(_read(ref_path)) if ref_path else None
    result, before, after = planarize(quad, reference=reference, iters=iters)
    _write(out, save_quad_obj(result))
    click.echo(
        f"eta mean {before.eta_mean:.4g} -> {after.eta_mean:.4g}, "
        f"max {before.eta_max:.4g} -> {after.eta_max:.4g}"
    )


@cli.command("eval")
@click.option("--sample", "sample_path", required=True, help="Sample directory.")
@click.option("--field", "field_path", required=True)
@click.option("--out", required=True)
def eval_cmd(sample_path, field_path, out):
    """Evaluate a field against a dataset sample's ground truth."""
    sample = read_sample(sample_path)
    field = DirectionField.from_json(_read(field_path))
    report = evaluate_sample(sample, field)
    _write(out, report.to_json())
    click.echo(f"theta {report.theta:.4g} delta {report.delta} "
               f"singularities {report.singularities}")


@cli.command("train")
@click.option("--dataset", "dataset_path", required=True, help="Dataset root.")
@click.option("--epochs", type=int, default=200)
@click.option("--lr", type=float, default=1e-4)
@click.option("--seed", type=int, default=0)
@click.option("--split", default="train")
@click.option("--out", required=True, help="Params JSON path.")
def train_cmd(dataset_path, epochs, lr, seed, split, out):
    """Train the feed-forward field predictor on a dataset."""
    from .dataset import load_manifest

    manifest = load_manifest(dataset_path)
    samples = [
        read_sample(os.path.join(dataset_path, entry["dir"]))
        for entry in manifest["samples"]
        if entry["split"] == split
    ]
    cfg = TrainConfig(epochs=epochs, learning_rate=lr, seed=seed)
    params, curve = train(samples, cfg)
    save_params(params, out)
    write_train_csv(curve, out + ".log.csv")
    click.echo(
        f"trained on {len(samples)} samples, "
        f"loss {curve[0]['total']:.6g} -> {curve[-1]['total']:.6g}"
    )


@cli.command("predict")
@click.option("--params", "params_path", required=True)
@click.option("--mesh", "mesh_path", required=True)
@click.option("--strokes", "strokes_path", default=None)
@click.option("--out", required=True)
def predict_cmd(params_path, mesh_path, strokes_path, out):
    """Predict a direction field with trained parameters."""
    params = load_params(params_path)
    mesh = load_mesh(_read(mesh_path))
    strokes = strokes_from_json(_read(strokes_path)) if strokes_path else None
    field = predict(params, mesh, strokes)
    _write(out, field.to_json())
    click.echo(f"predicted field for {field.m} faces")


@cli.command("serve")
@click.option("--port", type=int, default=8000)
@click.option("--host", default="127.0.0.1")
@click.option("--data-dir", default=None)
def serve_cmd(port, host, data_dir):
    """Run the HTTP service for the browser studio."""
    import uvicorn

    from .server import create_app

    uvicorn.run(create_app(data_dir=data_dir), host=host, port=port)


def cli_dispatch(argv: list) -> int:
    logging.basicConfig(level=os.environ.get("CDF_LOG", "WARNING").upper())
    try:
        cli.main(args=list(argv), standalone_mode=False)
        return 0
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 2
    except click.exceptions.Abort:
        return 2
    except Exception as exc:  # library/runtime failures
        log.debug("runtime error", exc_info=True)
        click.echo(f"error: {exc}", err=True)
        return 2


def main():
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
