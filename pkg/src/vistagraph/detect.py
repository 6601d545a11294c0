"""Visibility classification over panorama crops.

A detector scores (panorama, landmark) pairs in [0, 1]; thresholding the
score yields the visibility verdict. The in-process oracle detector wraps
the voxel line-of-sight baseline so the whole pipeline can run closed-loop
with no images or models. Real detectors run out of process and exchange
records through the Detection JSONL contract implemented here: one header
line followed by one record per line, records ordered by
(pano_id, landmark_id).
"""

from __future__ import annotations

import json
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from .errors import InvalidArgumentError, OutOfBoundsError, SchemaError
from .fsutil import atomic_write_text
from .geo import Landmark, PanoramaMeta, ViewGeometry, ZoomBox, localize, round_half_away
from .metrics import ConfusionMatrix, confusion_from_pairs
from .voxel import DEFAULT_AXIS_SAMPLES, DEFAULT_EYE_HEIGHT, VoxelGrid, landmark_visible_3d

DETECTION_SCHEMA_ID = "vistagraph-detection/1"
CROPSPEC_SCHEMA_ID = "vistagraph-cropspec/1"

DEFAULT_TAU = 0.5
DEFAULT_SAMPLE_INTERVAL_M = 30.0
DEFAULT_BUFFER_RADIUS_M = 3000.0

_BOX_KEYS = {"x_left", "x_right", "y_top", "y_bottom", "wrapped", "clamped"}
_RECORD_KEYS = {
    "pano_id",
    "landmark_id",
    "score",
    "visible",
    "tau",
    "box",
    "d_m",
    "delta_alpha_deg",
    "detector_id",
}


@dataclass(frozen=True)
class CropSpec:
    """Where to look for one landmark in one panorama."""

    pano: PanoramaMeta
    landmark: Landmark
    geom: ViewGeometry
    box: ZoomBox

    def to_record(self) -> dict:
        return {
            "pano_id": self.pano.pano_id,
            "landmark_id": self.landmark.landmark_id,
            "d_m": self.geom.distance_m,
            "delta_alpha_deg": self.geom.bearing_deg,
            "x_pix": self.geom.x_pix,
            "h_pix": self.geom.h_pix,
            "elevation_deg": self.geom.elevation_deg,
            "box": self.box.to_dict(),
        }


@dataclass(frozen=True)
class DetectionRecord:
    """One (panorama, landmark) visibility verdict with provenance."""

    pano_id: str
    landmark_id: str
    score: float
    visible: bool
    tau: float
    box: ZoomBox
    d_m: float
    delta_alpha_deg: float
    detector_id: str

    def __post_init__(self) -> None:
        for name, v in (("score", self.score), ("tau", self.tau)):
            if not 0.0 <= v <= 1.0:
                raise InvalidArgumentError(f"{name} must be in [0, 1], got {v}")
        if self.d_m < 0:
            raise InvalidArgumentError(f"d_m must be >= 0, got {self.d_m}")
        if self.visible != (self.score >= self.tau):
            raise InvalidArgumentError(
                f"record {self.pano_id}/{self.landmark_id}: visible flag does not "
                f"match score {self.score} vs tau {self.tau}"
            )

    def to_json_obj(self) -> dict:
        return {
            "pano_id": self.pano_id,
            "landmark_id": self.landmark_id,
            "score": self.score,
            "visible": self.visible,
            "tau": self.tau,
            "box": self.box.to_dict(),
            "d_m": self.d_m,
            "delta_alpha_deg": self.delta_alpha_deg,
            "detector_id": self.detector_id,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "DetectionRecord":
        return cls(
            pano_id=obj["pano_id"],
            landmark_id=obj["landmark_id"],
            score=float(obj["score"]),
            visible=bool(obj["visible"]),
            tau=float(obj["tau"]),
            box=ZoomBox.from_dict(obj["box"]),
            d_m=float(obj["d_m"]),
            delta_alpha_deg=float(obj["delta_alpha_deg"]),
            detector_id=obj["detector_id"],
        )


class Detector(ABC):
    """Scores how confidently a landmark appears at its predicted crop.

    Implementations must be deterministic for fixed inputs and expose a
    stable detector_id. `query_refs` maps landmark_id to the reference image
    identifier the detector matches against.
    """

    detector_id: str = "detector"

    def __init__(self, query_refs: dict[str, str] | None = None):
        self.query_refs = dict(query_refs or {})

    @abstractmethod
    def score(self, spec: CropSpec, crop_image: np.ndarray | None = None) -> float:
        """Confidence in [0, 1] that the landmark is present."""


class OracleDetector(Detector):
    """Synthetic ground truth: 1.0 where the voxel baseline sees the landmark."""

    def __init__(
        self,
        grid: VoxelGrid,
        n_samples: int = DEFAULT_AXIS_SAMPLES,
        eye_height: float = DEFAULT_EYE_HEIGHT,
    ):
        super().__init__()
        self.grid = grid
        self.n_samples = n_samples
        self.eye_height = eye_height
        self.detector_id = "oracle-voxel-los"

    def score(self, spec: CropSpec, crop_image: np.ndarray | None = None) -> float:
        x, y = spec.pano.location
        if not self.grid.contains_xy(x, y):
            raise OutOfBoundsError(
                f"panorama {spec.pano.pano_id!r} at ({x}, {y}) is outside the oracle grid"
            )
        visible = landmark_visible_3d(
            self.grid,
            spec.pano.location,
            spec.landmark,
            n_samples=self.n_samples,
            eye_height=self.eye_height,
        )
        return 1.0 if visible else 0.0


def oracle_detector(
    grid: VoxelGrid,
    n_samples: int = DEFAULT_AXIS_SAMPLES,
    eye_height: float = DEFAULT_EYE_HEIGHT,
) -> OracleDetector:
    return OracleDetector(grid, n_samples=n_samples, eye_height=eye_height)


def crop(image: np.ndarray, box: ZoomBox) -> np.ndarray:
    """Extract the sub-image under a zoom box.

    Wrapped boxes stitch the right-edge slice then the left-edge slice.
    Bounds are rounded half away from zero only here, at pixel time.
    """
    if image.ndim not in (2, 3):
        raise InvalidArgumentError(f"image must be 2-D or 3-D, got shape {image.shape}")
    img_h, img_w = image.shape[0], image.shape[1]
    top = round_half_away(box.y_top)
    bottom = round_half_away(box.y_bottom)
    left = round_half_away(box.x_left)
    right = round_half_away(box.x_right)
    if bottom > img_h or top < 0:
        raise InvalidArgumentError(
            f"box rows [{box.y_top}, {box.y_bottom}] do not fit image height {img_h}"
        )
    if not box.wrapped and (left < 0 or right > img_w):
        raise InvalidArgumentError(
            f"box columns [{box.x_left}, {box.x_right}] do not fit image width {img_w}"
        )
    if box.wrapped and (left > img_w or right > img_w):
        raise InvalidArgumentError(
            f"wrapped box columns [{box.x_left}, {box.x_right}] do not fit image width {img_w}"
        )
    if not box.wrapped:
        return image[top:bottom, left:right].copy()
    return np.concatenate([image[top:bottom, left:img_w], image[top:bottom, 0:right]], axis=1)


def classify(
    scored: Iterable[tuple[CropSpec, float]],
    tau: float,
    detector_id: str,
) -> list[DetectionRecord]:
    """Threshold scores into records; visible iff score >= tau."""
    if not 0.0 <= tau <= 1.0:
        raise InvalidArgumentError(f"tau must be in [0, 1], got {tau}")
    records = []
    for spec, score in scored:
        if not 0.0 <= score <= 1.0:
            raise InvalidArgumentError(
                f"score for {spec.pano.pano_id}/{spec.landmark.landmark_id} "
                f"must be in [0, 1], got {score}"
            )
        records.append(
            DetectionRecord(
                pano_id=spec.pano.pano_id,
                landmark_id=spec.landmark.landmark_id,
                score=score,
                visible=score >= tau,
                tau=tau,
                box=spec.box,
                d_m=spec.geom.distance_m,
                delta_alpha_deg=spec.geom.bearing_deg,
                detector_id=detector_id,
            )
        )
    return records


def build_crop_specs(
    panos: Iterable[PanoramaMeta],
    landmarks: Iterable[Landmark],
    padding: float = 0.0,
    observer_height: float = 0.0,
    max_distance: float | None = DEFAULT_BUFFER_RADIUS_M,
) -> list[CropSpec]:
    """Localization stage over the (pano, landmark) product, deterministically
    ordered by (pano_id, landmark_id); pairs beyond max_distance are skipped."""
    specs = []
    for pano in sorted(panos, key=lambda p: p.pano_id):
        for lm in sorted(landmarks, key=lambda l: l.landmark_id):
            geom, box = localize(pano, lm, padding=padding, observer_height=observer_height)
            if max_distance is not None and geom.distance_m > max_distance:
                continue
            specs.append(CropSpec(pano=pano, landmark=lm, geom=geom, box=box))
    return specs


def run_detection(
    specs: Iterable[CropSpec],
    detector: Detector,
    tau: float = DEFAULT_TAU,
    crops: dict[tuple[str, str], np.ndarray] | None = None,
) -> list[DetectionRecord]:
    """Score every crop spec and threshold; ordering follows the input specs."""
    scored = []
    for spec in specs:
        image = None
        if crops is not None:
            image = crops.get((spec.pano.pano_id, spec.landmark.landmark_id))
        scored.append((spec, detector.score(spec, image)))
    return classify(scored, tau, detector.detector_id)


def validate(
    predictions: Iterable[DetectionRecord],
    labels: dict,
) -> ConfusionMatrix:
    """Confusion matrix of predictions against ground-truth visibility labels.

    Labels are keyed by (pano_id, landmark_id) or, as a fallback, by pano_id.
    """
    pairs = []
    for rec in predictions:
        key = (rec.pano_id, rec.landmark_id)
        if key in labels:
            truth = labels[key]
        elif rec.pano_id in labels:
            truth = labels[rec.pano_id]
        else:
            raise InvalidArgumentError(
                f"no ground-truth label for pano {rec.pano_id!r} / landmark {rec.landmark_id!r}"
            )
        pairs.append((rec.visible, bool(truth)))
    return confusion_from_pairs(pairs)


def candidate_points(
    center: tuple[float, float],
    interval: float = DEFAULT_SAMPLE_INTERVAL_M,
    radius: float = DEFAULT_BUFFER_RADIUS_M,
) -> list[tuple[float, float]]:
    """Candidate observer lattice: `interval`-spaced points within `radius`."""
    if interval <= 0 or radius <= 0:
        raise InvalidArgumentError("interval and radius must be > 0")
    cx, cy = center
    n = int(math.floor(radius / interval))
    points = []
    for i in range(-n, n + 1):
        for j in range(-n, n + 1):
            x = cx + i * interval
            y = cy + j * interval
            if math.hypot(x - cx, y - cy) <= radius:
                points.append((x, y))
    return points


# --- Detection JSONL contract -------------------------------------------------

def _check_number(obj: dict, key: str, line_no: int, lo: float | None = None, hi: float | None = None):
    v = obj.get(key)
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise SchemaError(f"line {line_no}: field {key!r} must be a number, got {v!r}")
    if lo is not None and v < lo:
        raise SchemaError(f"line {line_no}: field {key!r} must be >= {lo}, got {v}")
    if hi is not None and v > hi:
        raise SchemaError(f"line {line_no}: field {key!r} must be <= {hi}, got {v}")


def validate_detection_obj(obj: dict, line_no: int = 0) -> None:
    """Strict schema check for one detection record object."""
    if set(obj.keys()) != _RECORD_KEYS:
        missing = _RECORD_KEYS - set(obj.keys())
        extra = set(obj.keys()) - _RECORD_KEYS
        raise SchemaError(
            f"line {line_no}: record keys wrong (missing={sorted(missing)}, extra={sorted(extra)})"
        )
    for key in ("pano_id", "landmark_id", "detector_id"):
        if not isinstance(obj[key], str) or not obj[key]:
            raise SchemaError(f"line {line_no}: field {key!r} must be a non-empty string")
    _check_number(obj, "score", line_no, 0.0, 1.0)
    _check_number(obj, "tau", line_no, 0.0, 1.0)
    _check_number(obj, "d_m", line_no, lo=0.0)
    _check_number(obj, "delta_alpha_deg", line_no, 0.0)
    if obj["delta_alpha_deg"] >= 360.0:
        raise SchemaError(f"line {line_no}: delta_alpha_deg must be < 360")
    if not isinstance(obj["visible"], bool):
        raise SchemaError(f"line {line_no}: field 'visible' must be a boolean")
    if obj["visible"] != (obj["score"] >= obj["tau"]):
        raise SchemaError(f"line {line_no}: visible flag inconsistent with score >= tau")
    box = obj["box"]
    if not isinstance(box, dict) or set(box.keys()) != _BOX_KEYS:
        raise SchemaError(f"line {line_no}: box keys must be exactly {sorted(_BOX_KEYS)}")
    for key in ("x_left", "x_right", "y_top", "y_bottom"):
        _check_number(box, key, line_no)
    for key in ("wrapped", "clamped"):
        if not isinstance(box[key], bool):
            raise SchemaError(f"line {line_no}: box field {key!r} must be a boolean")


def write_detections(
    target: str | Path | TextIO,
    records: Iterable[DetectionRecord],
    meta: dict | None = None,
) -> None:
    """Write the header line plus records sorted by (pano_id, landmark_id)."""
    header = {"header": {"schema": DETECTION_SCHEMA_ID, **(meta or {})}}
    ordered = sorted(records, key=lambda r: (r.pano_id, r.landmark_id))
    lines = [json.dumps(header, sort_keys=True)]
    lines.extend(json.dumps(r.to_json_obj(), sort_keys=True) for r in ordered)
    payload = "\n".join(lines) + "\n"
    if hasattr(target, "write"):
        target.write(payload)
    else:
        atomic_write_text(target, payload)


def read_detections(source: str | Path | TextIO) -> tuple[dict, list[DetectionRecord]]:
    """Parse and strictly validate a Detection JSONL file."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SchemaError("detection file is empty: header line required")
    try:
        head = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise SchemaError(f"line 1: not valid JSON ({exc})") from exc
    if "header" not in head or head["header"].get("schema") != DETECTION_SCHEMA_ID:
        raise SchemaError(f"line 1: expected header with schema {DETECTION_SCHEMA_ID!r}")
    records = []
    for i, line in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"line {i}: not valid JSON ({exc})") from exc
        validate_detection_obj(obj, line_no=i)
        records.append(DetectionRecord.from_json_obj(obj))
    return head["header"], records


def write_crop_specs(
    target: str | Path | TextIO,
    specs: Iterable[CropSpec],
    meta: dict | None = None,
) -> None:
    header = {"header": {"schema": CROPSPEC_SCHEMA_ID, **(meta or {})}}
    ordered = sorted(specs, key=lambda s: (s.pano.pano_id, s.landmark.landmark_id))
    lines = [json.dumps(header, sort_keys=True)]
    lines.extend(json.dumps(s.to_record(), sort_keys=True) for s in ordered)
    payload = "\n".join(lines) + "\n"
    if hasattr(target, "write"):
        target.write(payload)
    else:
        atomic_write_text(target, payload)


def read_crop_spec_records(source: str | Path | TextIO) -> tuple[dict, list[dict]]:
    """Crop-spec JSONL as plain dicts (geometry already flattened)."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SchemaError("crop-spec file is empty: header line required")
    head = json.loads(lines[0])
    if "header" not in head or head["header"].get("schema") != CROPSPEC_SCHEMA_ID:
        raise SchemaError(f"line 1: expected header with schema {CROPSPEC_SCHEMA_ID!r}")
    return head["header"], [json.loads(ln) for ln in lines[1:]]


__all__ = [
    "CROPSPEC_SCHEMA_ID",
    "CropSpec",
    "DEFAULT_BUFFER_RADIUS_M",
    "DEFAULT_SAMPLE_INTERVAL_M",
    "DEFAULT_TAU",
    "DETECTION_SCHEMA_ID",
    "DetectionRecord",
    "Detector",
    "OracleDetector",
    "build_crop_specs",
    "candidate_points",
    "classify",
    "crop",
    "oracle_detector",
    "read_crop_spec_records",
    "read_detections",
    "run_detection",
    "validate",
    "validate_detection_obj",
    "write_crop_specs",
    "write_detections",
]
