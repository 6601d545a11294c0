"""Evaluation machinery: confusion-matrix scores, distance bands, Dice-cell
overlap between two spatial point distributions, and cumulative distance
curves.

The positive class everywhere is "visible". Division-by-zero in any score
yields None (an explicit undefined marker), never a silent zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

DICE_CLASS_THRESHOLD = 0.5
DEFAULT_CURVE_STEP_M = 50.0
DEFAULT_SQUARE_CELL_M = 250.0


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise InvalidArgumentError("confusion counts must be >= 0")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def support_visible(self) -> int:
        return self.tp + self.fn

    @property
    def support_invisible(self) -> int:
        return self.tn + self.fp

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            tn=self.tn + other.tn,
            fn=self.fn + other.fn,
        )


def _ratio(num: int, den: int) -> float | None:
    return num / den if den > 0 else None


def _f1(precision: float | None, recall: float | None) -> float | None:
    if precision is None or recall is None or precision + recall == 0:
        return None
    return 2 * precision * recall / (precision + recall)


def _mean(a: float | None, b: float | None) -> float | None:
    if a is None or b is None:
        return None
    return (a + b) / 2


def scores(cm: ConfusionMatrix) -> dict:
    """Accuracy plus per-class precision/recall/F1 and macro averages."""
    if cm.total == 0:
        raise InvalidArgumentError("cannot score an empty confusion matrix")
    p_vis = _ratio(cm.tp, cm.tp + cm.fp)
    r_vis = _ratio(cm.tp, cm.tp + cm.fn)
    p_inv = _ratio(cm.tn, cm.tn + cm.fn)
    r_inv = _ratio(cm.tn, cm.tn + cm.fp)
    f_vis = _f1(p_vis, r_vis)
    f_inv = _f1(p_inv, r_inv)
    return {
        "accuracy": (cm.tp + cm.tn) / cm.total,
        "visible": {"precision": p_vis, "recall": r_vis, "f1": f_vis, "support": cm.support_visible},
        "invisible": {"precision": p_inv, "recall": r_inv, "f1": f_inv, "support": cm.support_invisible},
        "macro": {
            "precision": _mean(p_vis, p_inv),
            "recall": _mean(r_vis, r_inv),
            "f1": _mean(f_vis, f_inv),
        },
    }


@dataclass(frozen=True)
class DistanceBand:
    lower: float
    upper: float  # exclusive; math.inf for the open last band

    def __post_init__(self) -> None:
        if not self.lower < self.upper:
            raise InvalidArgumentError(f"band must satisfy lower < upper, got {self}")

    def contains(self, d: float) -> bool:
        return self.lower <= d < self.upper

    @property
    def label(self) -> str:
        if math.isinf(self.upper):
            return f"{self.lower:g}m+"
        return f"{self.lower:g}-{self.upper:g}m"


def default_bands() -> list[DistanceBand]:
    return [
        DistanceBand(0.0, 500.0),
        DistanceBand(500.0, 1000.0),
        DistanceBand(1000.0, 1500.0),
        DistanceBand(1500.0, math.inf),
    ]


def _check_partition(bands: list[DistanceBand]) -> None:
    if not bands:
        raise InvalidArgumentError("at least one band required")
    ordered = sorted(bands, key=lambda b: b.lower)
    if ordered[0].lower != 0.0 or not math.isinf(ordered[-1].upper):
        raise InvalidArgumentError("bands must partition [0, inf)")
    for a, b in zip(ordered, ordered[1:]):
        if a.upper != b.lower:
            raise InvalidArgumentError(f"bands leave a gap or overlap at {a.upper}")


def confusion_from_pairs(pairs: list[tuple[bool, bool]]) -> ConfusionMatrix:
    """Build a matrix from (predicted_visible, label_visible) pairs."""
    tp = sum(1 for p, t in pairs if p and t)
    fp = sum(1 for p, t in pairs if p and not t)
    tn = sum(1 for p, t in pairs if not p and not t)
    fn = sum(1 for p, t in pairs if not p and t)
    return ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn)


def band_scores(
    observations: list[tuple[float, bool, bool]],
    bands: list[DistanceBand] | None = None,
) -> dict[str, dict]:
    """Per-band confusion and scores from (distance, predicted, label) rows.

    Band membership is half-open: lower <= d < upper.
    """
    bands = bands if bands is not None else default_bands()
    _check_partition(bands)
    per_band: dict[str, list[tuple[bool, bool]]] = {b.label: [] for b in bands}
    for d, predicted, label in observations:
        if d < 0:
            raise InvalidArgumentError(f"negative distance {d}")
        for b in bands:
            if b.contains(d):
                per_band[b.label].append((predicted, label))
                break
    out = {}
    for b in bands:
        cm = confusion_from_pairs(per_band[b.label])
        out[b.label] = {
            "matrix": cm,
            "scores": scores(cm) if cm.total > 0 else None,
        }
    return out


class SquareGrid:
    """Square-cell binning over planar coordinates."""

    def __init__(self, cell_size: float = DEFAULT_SQUARE_CELL_M, origin: tuple[float, float] = (0.0, 0.0)):
        if cell_size <= 0:
            raise InvalidArgumentError(f"cell_size must be > 0, got {cell_size}")
        self.cell_size = cell_size
        self.origin = origin

    def cell_of(self, x: float, y: float) -> str:
        i = math.floor((x - self.origin[0]) / self.cell_size)
        j = math.floor((y - self.origin[1]) / self.cell_size)
        return f"sq:{i}:{j}"


class HexGrid:
    """Pointy-top hexagon binning (axial coordinates, cube rounding)."""

    def __init__(self, cell_size: float = DEFAULT_SQUARE_CELL_M, origin: tuple[float, float] = (0.0, 0.0)):
        if cell_size <= 0:
            raise InvalidArgumentError(f"cell_size must be > 0, got {cell_size}")
        self.cell_size = cell_size  # hex circumradius
        self.origin = origin

    def cell_of(self, x: float, y: float) -> str:
        px = (x - self.origin[0]) / self.cell_size
        py = (y - self.origin[1]) / self.cell_size
        q = (math.sqrt(3) / 3) * px - (1.0 / 3) * py
        r = (2.0 / 3) * py
        # cube rounding
        s = -q - r
        rq, rr, rs = round(q), round(r), round(s)
        dq, dr, ds = abs(rq - q), abs(rr - r), abs(rs - s)
        if dq > dr and dq > ds:
            rq = -rr - rs
        elif dr > ds:
            rr = -rq - rs
        return f"hex:{int(rq)}:{int(rr)}"


@dataclass(frozen=True)
class DiceCell:
    cell_id: str
    p_svi: float
    p_interest: float
    dice: float
    viewpoint_class: str  # "tourism" | "citizen"


def dice_grid(
    svi_points: list[tuple[float, float]],
    interest_points: list[tuple[float, float]],
    grid: SquareGrid | HexGrid | None = None,
) -> list[DiceCell]:
    """Per-cell overlap of two point distributions.

    Counts per cell are normalized to proportions over each full point set;
    the overlap in each non-empty cell is 2*min(p, q)/(p + q). Cells at or
    above 0.5 are classed "tourism", below "citizen".
    """
    if not svi_points or not interest_points:
        raise InvalidArgumentError("both point sets must be non-empty")
    grid = grid if grid is not None else SquareGrid()
    counts_svi: dict[str, int] = {}
    counts_int: dict[str, int] = {}
    for x, y in svi_points:
        key = grid.cell_of(x, y)
        counts_svi[key] = counts_svi.get(key, 0) + 1
    for x, y in interest_points:
        key = grid.cell_of(x, y)
        counts_int[key] = counts_int.get(key, 0) + 1
    n_svi = len(svi_points)
    n_int = len(interest_points)
    cells = sorted(set(counts_svi) | set(counts_int))
    out = []
    for key in cells:
        p = counts_svi.get(key, 0) / n_svi
        q = counts_int.get(key, 0) / n_int
        dice = 2 * min(p, q) / (p + q)
        cls = "tourism" if dice >= DICE_CLASS_THRESHOLD else "citizen"
        out.append(DiceCell(cell_id=key, p_svi=p, p_interest=q, dice=dice, viewpoint_class=cls))
    return out


@dataclass(frozen=True)
class CumulativeCurves:
    """Two cumulative distance profiles sampled on a common axis."""

    distances_m: list[float]
    visible_cumulative: list[float]
    interest_cumulative: list[float]
    d50_visible: float
    d50_interest: float
    cosine_similarity: float


def _cumulative(ds: np.ndarray, axis: np.ndarray) -> np.ndarray:
    return np.array([(ds <= t).sum() / ds.size for t in axis])


def _d50(axis: np.ndarray, cumulative: np.ndarray) -> float:
    idx = np.nonzero(cumulative >= 0.5)[0]
    if idx.size == 0:
        return math.inf  # radius override cut the curve before the median
    return float(axis[idx[0]])


def cumulative_curves(
    visible_d: list[float],
    interest_d: list[float],
    step: float = DEFAULT_CURVE_STEP_M,
    radius: float | None = None,
) -> CumulativeCurves:
    """Cumulative proportion of each set within distance t, for t on a step grid.

    `radius` defaults to the smallest step multiple covering both sets, so
    both curves reach 1 at the final sample.
    """
    if not visible_d or not interest_d:
        raise InvalidArgumentError("both distance sets must be non-empty")
    if step <= 0:
        raise InvalidArgumentError(f"step must be > 0, got {step}")
    vis = np.asarray(visible_d, dtype=float)
    intr = np.asarray(interest_d, dtype=float)
    if (vis < 0).any() or (intr < 0).any():
        raise InvalidArgumentError("distances must be >= 0")
    if radius is None:
        radius = step * math.ceil(max(vis.max(), intr.max()) / step)
        radius = max(radius, step)
    axis = np.arange(0.0, radius + step / 2, step)
    cum_vis = _cumulative(vis, axis)
    cum_int = _cumulative(intr, axis)
    denom = np.linalg.norm(cum_vis) * np.linalg.norm(cum_int)
    cosine = float(np.dot(cum_vis, cum_int) / denom) if denom > 0 else 0.0
    return CumulativeCurves(
        distances_m=[float(t) for t in axis],
        visible_cumulative=[float(v) for v in cum_vis],
        interest_cumulative=[float(v) for v in cum_int],
        d50_visible=_d50(axis, cum_vis),
        d50_interest=_d50(axis, cum_int),
        cosine_similarity=cosine,
    )


__all__ = [
    "ConfusionMatrix",
    "CumulativeCurves",
    "DEFAULT_CURVE_STEP_M",
    "DEFAULT_SQUARE_CELL_M",
    "DICE_CLASS_THRESHOLD",
    "DiceCell",
    "DistanceBand",
    "HexGrid",
    "SquareGrid",
    "band_scores",
    "confusion_from_pairs",
    "cumulative_curves",
    "default_bands",
    "dice_grid",
    "scores",
]
