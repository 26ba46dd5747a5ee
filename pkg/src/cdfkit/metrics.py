"""Quantitative evaluation: stroke deviation, ground-truth closeness,
singularity counts, and report assembly."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .field import DirectionField, FieldError, singularity_indices
from .mesh import TriMesh


class MetricError(ValueError):
    pass


@dataclass
class EvalReport:
    delta: float | None = None  # degrees, stroke deviation
    theta: float | None = None  # degrees, closeness to ground truth
    singularities: int | None = None
    eta_mean_before: float | None = None
    eta_mean_after: float | None = None
    eta_max_before: float | None = None
    eta_max_after: float | None = None

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls(**json.loads(text))


def _line_angle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Acute angle between undirected lines, elementwise over rows, radians.

    atan2 of (cross, |dot|) is exact for identical inputs (cross is exactly
    zero) and well-conditioned near 0 and 90 degrees.
    """
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    dot = np.abs(np.einsum("...j,...j->...", a, b))
    return np.arctan2(cross, dot)


def stroke_deviation(field: DirectionField, assignment) -> float:
    """Length-weighted mean over segments of the acute line angle between
    the segment and the closer of the two field families, in degrees."""
    if assignment is None or assignment.total_segments() == 0:
        raise MetricError("empty stroke assignment")
    faces, vecs, _ = assignment.flat_segments()
    lens = np.linalg.norm(vecs, axis=1)
    keep = lens > 1e-12
    faces, vecs, lens = faces[keep], vecs[keep], lens[keep]
    if len(faces) == 0:
        raise MetricError("all segments degenerate")
    ang_u = _line_angle(field.u[faces], vecs)
    ang_v = _line_angle(field.v[faces], vecs)
    ang = np.minimum(ang_u, ang_v)
    return float(np.degrees(np.sum(ang * lens) / np.sum(lens)))


def gt_closeness(field: DirectionField, gt: DirectionField, mesh: TriMesh | None = None) -> float:
    """Mean over faces of the correspondence-minimal pair-averaged line
    angle between the two fields, in degrees."""
    if field.m != gt.m:
        raise FieldError(f"field has {field.m} faces, ground truth {gt.m}")
    a_uu = _line_angle(field.u, gt.u)
    a_vv = _line_angle(field.v, gt.v)
    a_uv = _line_angle(field.u, gt.v)
    a_vu = _line_angle(field.v, gt.u)
    direct = 0.5 * (a_uu + a_vv)
    swapped = 0.5 * (a_uv + a_vu)
    return float(np.degrees(np.mean(np.minimum(direct, swapped))))


def evaluate(sample, field: DirectionField, planarity=None) -> EvalReport:
    """Report for one sample: theta against the sample's ground truth,
    delta against its strokes, singularity count, optional planarity."""
    from .strokes import assign_segments

    report = EvalReport()
    report.theta = gt_closeness(field, sample.gt_field, sample.mesh)
    if sample.strokes:
        assignment = assign_segments(
            sample.mesh, [s.points for s in sample.strokes]
        )
        report.delta = stroke_deviation(field, assignment)
    report.singularities = singularity_indices(field, sample.mesh).count
    if planarity is not None:
        report.eta_mean_before = planarity.get("eta_mean_before")
        report.eta_mean_after = planarity.get("eta_mean_after")
        report.eta_max_before = planarity.get("eta_max_before")
        report.eta_max_after = planarity.get("eta_max_after")
    return report


CSV_COLUMNS = [
    "model",
    "eta_mean_before",
    "eta_mean_after",
    "eta_max_before",
    "eta_max_after",
    "delta",
    "theta",
    "singularities",
]


def write_report_csv(rows: dict, path: str):
    """rows: {model name: EvalReport}, one CSV row per model."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(CSV_COLUMNS)
        for name in sorted(rows):
            r = rows[name]
            wr.writerow(
                [name] + [getattr(r, c) if getattr(r, c) is not None else "" for c in CSV_COLUMNS[1:]]
            )


def read_report_csv(path: str) -> dict:
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kwargs = {}
            for c in CSV_COLUMNS[1:]:
                val = row[c]
                if c == "singularities":
                    kwargs[c] = int(val) if val != "" else None
                else:
                    kwargs[c] = float(val) if val != "" else None
            out[row["model"]] = EvalReport(**kwargs)
    return out
