"""Range-normalized percentage errors, summary reports, and SVG comparison
plots of true versus predicted shapes or Cp distributions.

The percentage error of a point is 100*|pred - truth| divided by the
range (max - min) of the truth signal for that sample, computed per
signal (x, y, Cp suction, Cp pressure).  Sample scores average the
signal means; the report aggregate averages over samples.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import models
from .dataset import Dataset, Sample, cp_vector, shape_vector
from .errors import CaseMismatch, ConstantTruth, EmptyTestSplit
from .geometry import NODE_COUNT

RANGE_TOL = 1e-12
SHAPE_WINDOW = ((-0.05, 1.05), (-0.55, 0.55))   # mirrors the raster mapping
CP_AXIS = (2.0, -8.0)                            # inverted: suction peaks up


def pct_error(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Per-point percentage errors normalized by the truth signal's range."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or truth.size < 2:
        raise ValueError(f"need equal-length signals of 2+ points, got {pred.shape}/{truth.shape}")
    span = float(truth.max() - truth.min())
    if span < RANGE_TOL:
        raise ConstantTruth(f"truth range {span:.3g} below {RANGE_TOL}")
    return 100.0 * np.abs(pred - truth) / span


@dataclass
class SignalError:
    mean_pct: float
    max_pct: float


@dataclass
class SampleError:
    id: str
    mean_pct_error: float
    max_pct_error: float
    per_signal: dict[str, SignalError]


@dataclass
class ErrorReport:
    case_id: str
    model_kind: str
    per_sample: list[SampleError]
    aggregate: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "case": self.case_id,
            "model": self.model_kind,
            "aggregate": self.aggregate,
            "per_sample": [
                {"id": s.id, "mean_pct_error": s.mean_pct_error,
                 "max_pct_error": s.max_pct_error,
                 "per_signal": {k: {"mean_pct": v.mean_pct, "max_pct": v.max_pct}
                                for k, v in s.per_signal.items()}}
                for s in self.per_sample
            ],
        }
        return json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _signals(direction: str) -> list[str]:
    if direction == "cp_to_shape":
        return ["x", "y"]
    return ["cp_suction", "cp_pressure"]


def _truth_vector(sample: Sample, direction: str) -> np.ndarray:
    return shape_vector(sample.airfoil) if direction == "cp_to_shape" else cp_vector(sample.cp)


def evaluate(ckpt: models.Checkpoint | None, data: Dataset, predict_fn=None) -> ErrorReport:
    """Score the test split sample by sample, deterministically by id.

    `predict_fn(sample) -> (250,) array` overrides the checkpoint forward
    pass (used by oracle hooks in tests); with a checkpoint given, its
    case wiring must match the dataset.
    """
    if ckpt is not None and ckpt.spec.case != data.case:
        raise CaseMismatch(f"checkpoint is {ckpt.spec.case.case_id}, data is {data.case.case_id}")
    if predict_fn is None:
        if ckpt is None:
            raise ValueError("need a checkpoint or a predict_fn")
        predict_fn = lambda s: models.predict_sample(ckpt, s)
    test_idx = data.test_indices
    if test_idx.size == 0:
        raise EmptyTestSplit("dataset has no test samples")
    direction = data.case.direction
    names = _signals(direction)

    def scored(indices):
        entries = []
        sq_sum, n_val = 0.0, 0
        for i in sorted(indices, key=lambda k: data.samples[k].id):
            s = data.samples[i]
            pred = predict_fn(s)
            truth = _truth_vector(s, direction)
            per_signal = {}
            for j, name in enumerate(names):
                seg = slice(j * NODE_COUNT, (j + 1) * NODE_COUNT)
                pct = pct_error(pred[seg], truth[seg])
                per_signal[name] = SignalError(float(pct.mean()), float(pct.max()))
            entries.append(SampleError(
                id=s.id,
                mean_pct_error=float(np.mean([v.mean_pct for v in per_signal.values()])),
                max_pct_error=float(np.max([v.max_pct for v in per_signal.values()])),
                per_signal=per_signal))
            sq_sum += float(np.sum((pred - truth) ** 2))
            n_val += truth.size
        return entries, (sq_sum / n_val if n_val else float("nan"))

    per_sample, test_mse = scored(test_idx)
    train_idx = data.train_indices
    if train_idx.size:
        _, train_mse = scored(train_idx)
    else:
        train_mse = float("nan")
    report = ErrorReport(
        case_id=data.case.case_id,
        model_kind=ckpt.spec.kind if ckpt is not None else "hook",
        per_sample=per_sample,
        aggregate={
            "overall_mean_pct": float(np.mean([s.mean_pct_error for s in per_sample])),
            "overall_max_pct": float(np.max([s.max_pct_error for s in per_sample])),
            "test_mse": test_mse,
            "train_mse": train_mse,
        })
    return report


# --- SVG plotting ------------------------------------------------------------

_W, _H = 640, 420
_MARGIN = (60, 20, 36, 44)  # left, right, top, bottom


class _Panel:
    """One plot panel with a fixed world window mapped to pixel space."""

    def __init__(self, x0, x1, y0, y1, top, height):
        self.x0, self.x1, self.y0, self.y1 = x0, x1, y0, y1
        left, right, _, bottom = _MARGIN
        self.px0, self.px1 = left, _W - right
        self.py0, self.py1 = top, top + height

    def px(self, x):
        return self.px0 + (x - self.x0) / (self.x1 - self.x0) * (self.px1 - self.px0)

    def py(self, y):
        return self.py0 + (self.y1 - y) / (self.y1 - self.y0) * (self.py1 - self.py0)

    def polyline(self, xs, ys, dashed=False, color="#000000") -> str:
        pts = " ".join(f"{self.px(x):.2f},{self.py(y):.2f}" for x, y in zip(xs, ys))
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        return (f'<polyline fill="none" stroke="{color}" stroke-width="1.2"{dash} '
                f'points="{pts}"/>')

    def axes(self, xlabel: str, ylabel: str) -> str:
        parts = [f'<rect x="{self.px0}" y="{self.py0}" width="{self.px1 - self.px0}" '
                 f'height="{self.py1 - self.py0}" fill="none" stroke="#888888"/>']
        for t in np.linspace(self.x0, self.x1, 6):
            x = self.px(t)
            parts.append(f'<line x1="{x:.2f}" y1="{self.py1}" x2="{x:.2f}" '
                         f'y2="{self.py1 + 4}" stroke="#000000"/>')
            parts.append(f'<text x="{x:.2f}" y="{self.py1 + 16}" font-size="10" '
                         f'text-anchor="middle">{t:.3g}</text>')
        for t in np.linspace(self.y0, self.y1, 6):
            y = self.py(t)
            parts.append(f'<line x1="{self.px0 - 4}" y1="{y:.2f}" x2="{self.px0}" '
                         f'y2="{y:.2f}" stroke="#000000"/>')
            parts.append(f'<text x="{self.px0 - 6}" y="{y + 3:.2f}" font-size="10" '
                         f'text-anchor="end">{t:.3g}</text>')
        parts.append(f'<text x="{(self.px0 + self.px1) / 2}" y="{self.py1 + 30}" '
                     f'font-size="11" text-anchor="middle">{xlabel}</text>')
        parts.append(f'<text x="14" y="{(self.py0 + self.py1) / 2}" font-size="11" '
                     f'text-anchor="middle" transform="rotate(-90 14 '
                     f'{(self.py0 + self.py1) / 2})">{ylabel}</text>')
        return "\n".join(parts)


def _error_ceiling(values: np.ndarray) -> float:
    peak = float(values.max()) if values.size else 0.0
    return max(5.0, math.ceil(peak / 5.0) * 5.0)


def plot_comparison(sample: Sample, prediction: np.ndarray, kind: str) -> str:
    """Deterministic SVG: true curves solid, predicted dashed, plus a
    per-station percentage-error panel underneath."""
    pred = np.asarray(prediction, dtype=np.float64).reshape(-1)
    if pred.shape != (2 * NODE_COUNT,):
        raise ValueError(f"prediction must have {2 * NODE_COUNT} values, got {pred.shape}")
    top_h, err_h, gap = _H - 120, 150, 58
    total_h = _MARGIN[2] + top_h + gap + err_h + _MARGIN[3] + 8

    if kind == "shape":
        truth = shape_vector(sample.airfoil)
        (x0, x1), (y0, y1) = SHAPE_WINDOW
        panel = _Panel(x0, x1, y0, y1, _MARGIN[2], top_h)
        curves = [panel.polyline(truth[:NODE_COUNT], truth[NODE_COUNT:]),
                  panel.polyline(pred[:NODE_COUNT], pred[NODE_COUNT:], dashed=True)]
        axes = panel.axes("x/c", "y/c")
        err_x = np.arange(NODE_COUNT) / (NODE_COUNT - 1)
        err_xlabel = "normalized node index"
        signals = ("x", "y")
    elif kind == "cp":
        truth = cp_vector(sample.cp)
        stations = sample.cp.stations.stations
        panel = _Panel(0.0, 1.0, CP_AXIS[1], CP_AXIS[0], _MARGIN[2], top_h)
        # inverted Cp axis: draw -Cp so suction peaks point up
        curves = [panel.polyline(stations, -truth[:NODE_COUNT]),
                  panel.polyline(stations, -truth[NODE_COUNT:]),
                  panel.polyline(stations, -pred[:NODE_COUNT], dashed=True),
                  panel.polyline(stations, -pred[NODE_COUNT:], dashed=True)]
        axes = panel.axes("x/c", "-Cp")
        err_x = stations
        err_xlabel = "x/c"
        signals = ("suction", "pressure")
    else:
        raise ValueError(f"unknown plot kind {kind!r}")

    err_a = pct_error(pred[:NODE_COUNT], truth[:NODE_COUNT])
    err_b = pct_error(pred[NODE_COUNT:], truth[NODE_COUNT:])
    err_top = _MARGIN[2] + top_h + gap
    err_panel = _Panel(float(err_x[0]), float(err_x[-1]), 0.0,
                       _error_ceiling(np.concatenate([err_a, err_b])), err_top, err_h)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_W}" '
        f'height="{total_h}" viewBox="0 0 {_W} {total_h}">',
        '<rect width="100%" height="100%" fill="#ffffff"/>',
        f'<text x="{_W / 2}" y="16" font-size="12" text-anchor="middle">'
        f'{sample.id} ({kind})</text>',
        axes,
        *curves,
        f'<text x="{_W - 160}" y="{_MARGIN[2] + 14}" font-size="11">true (solid)</text>',
        f'<text x="{_W - 160}" y="{_MARGIN[2] + 28}" font-size="11">predicted (dashed)</text>',
        err_panel.axes(err_xlabel, "error %"),
        err_panel.polyline(err_x, err_a),
        err_panel.polyline(err_x, err_b, dashed=True),
        f'<text x="{_W - 200}" y="{err_top + 14}" font-size="10">'
        f'{signals[0]} (solid) / {signals[1]} (dashed)</text>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"
