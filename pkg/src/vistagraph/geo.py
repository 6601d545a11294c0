"""Image-space localization of a distant target in an equirectangular panorama.

Coordinate conventions used throughout:

  World frame (planar, pre-projected):
    - x axis: East (meters), y axis: North (meters).
    - Azimuth: degrees clockwise from geographic north, in [0, 360).
      Computed as atan2(east_offset, north_offset) -- note the argument
      order, which is swapped relative to the atan2(y, x) most math
      libraries document. 0 deg = due north, 90 deg = due east.

  Image frame (equirectangular):
    - Column 0 at the left edge; the camera heading points at column W/2.
    - Horizontal angle is linear in pixel column (360 deg across W columns).
    - Row 0 at the top; the horizon sits at row H_img/2 for a level camera
      with a full vertical field of view (default 180 deg).

All geometry is real-valued; rounding to integer pixel bounds happens only
at crop time. Panoramas are assumed level (no pitch/roll correction).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .errors import DegenerateGeometryError, InvalidArgumentError

Point = tuple[float, float]

FULL_VERTICAL_FOV_DEG = 180.0


def _require_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise InvalidArgumentError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class PanoramaMeta:
    """A geotagged equirectangular frame: location, heading and pixel size."""

    pano_id: str
    x: float
    y: float
    heading: float
    width: int
    height: int
    vertical_fov: float = FULL_VERTICAL_FOV_DEG

    def __post_init__(self) -> None:
        _require_finite("panorama location", self.x, self.y)
        if self.width < 2 or self.height < 2:
            raise InvalidArgumentError(
                f"panorama {self.pano_id!r}: width/height must be >= 2, "
                f"got {self.width}x{self.height}"
            )
        if not 0.0 <= self.heading < 360.0:
            raise InvalidArgumentError(
                f"panorama {self.pano_id!r}: heading must be in [0, 360), got {self.heading}"
            )
        if self.vertical_fov <= 0:
            raise InvalidArgumentError(
                f"panorama {self.pano_id!r}: vertical_fov must be > 0, got {self.vertical_fov}"
            )
        if self.width != 2 * self.height:
            warnings.warn(
                f"panorama {self.pano_id!r}: {self.width}x{self.height} is not a "
                "2:1 full equirectangular frame; column/row mapping assumes it is",
                stacklevel=2,
            )

    @property
    def location(self) -> Point:
        return (self.x, self.y)


@dataclass(frozen=True)
class Landmark:
    """A named target with planar location and physical height above ground."""

    landmark_id: str
    name: str
    x: float
    y: float
    height: float
    query_image_ref: str = ""

    def __post_init__(self) -> None:
        _require_finite("landmark location", self.x, self.y)
        if not self.height > 0:
            raise InvalidArgumentError(
                f"landmark {self.landmark_id!r}: height must be > 0, got {self.height}"
            )

    @property
    def location(self) -> Point:
        return (self.x, self.y)


@dataclass(frozen=True)
class ViewGeometry:
    """Where a landmark falls in a panorama: range, angles and pixel coordinates."""

    distance_m: float
    azimuth_deg: float
    bearing_deg: float
    x_pix: float
    elevation_deg: float
    h_pix: float


@dataclass(frozen=True)
class ZoomBox:
    """Crop bounds around the upper half of a landmark.

    Horizontal bounds are stored wrapped into [0, W); `wrapped` marks boxes
    that cross the panorama seam, in which case the crop is the union of
    [x_left, W) and [0, x_right). `clamped` marks boxes whose top was cut
    at row 0.
    """

    x_left: float
    x_right: float
    y_top: float
    y_bottom: float
    padding: float
    wrapped: bool = False
    clamped: bool = False

    def to_dict(self) -> dict:
        return {
            "x_left": self.x_left,
            "x_right": self.x_right,
            "y_top": self.y_top,
            "y_bottom": self.y_bottom,
            "wrapped": self.wrapped,
            "clamped": self.clamped,
        }

    @classmethod
    def from_dict(cls, d: dict, padding: float = 0.0) -> "ZoomBox":
        return cls(
            x_left=float(d["x_left"]),
            x_right=float(d["x_right"]),
            y_top=float(d["y_top"]),
            y_bottom=float(d["y_bottom"]),
            padding=padding,
            wrapped=bool(d["wrapped"]),
            clamped=bool(d["clamped"]),
        )


def distance(observer: Point, target: Point) -> float:
    """Euclidean distance in meters between two planar points."""
    _require_finite("observer", *observer)
    _require_finite("target", *target)
    return math.hypot(target[0] - observer[0], target[1] - observer[1])


def azimuth(observer: Point, target: Point) -> float:
    """Bearing from observer to target, degrees clockwise from north in [0, 360).

    Argument order inside atan2 is (east_offset, north_offset).
    """
    _require_finite("observer", *observer)
    _require_finite("target", *target)
    dx = target[0] - observer[0]
    dy = target[1] - observer[1]
    if dx == 0.0 and dy == 0.0:
        raise DegenerateGeometryError("bearing undefined for coincident points")
    return math.degrees(math.atan2(dx, dy)) % 360.0


def relative_bearing(azimuth_deg: float, heading_deg: float) -> float:
    """Offset of the target from the camera heading, wrapped to [0, 360).

    Values in (0, 180) put the target right of the heading, (180, 360) left.
    """
    for name, v in (("azimuth", azimuth_deg), ("heading", heading_deg)):
        if not 0.0 <= v < 360.0:
            raise InvalidArgumentError(f"{name} must be in [0, 360), got {v}")
    return (azimuth_deg - heading_deg) % 360.0


def pixel_column(bearing_deg: float, width: int) -> float:
    """Fractional pixel column for a relative bearing; heading maps to W/2.

    Periodic in the bearing: any finite angle is wrapped into the frame.
    """
    if width < 2:
        raise InvalidArgumentError(f"width must be >= 2, got {width}")
    _require_finite("bearing", bearing_deg)
    return (width / 2.0 + bearing_deg / 360.0 * width) % width


def elevation_angle(height_m: float, distance_m: float) -> float:
    """Elevation angle in degrees of a target of the given height at range d."""
    if distance_m == 0:
        raise DegenerateGeometryError("elevation undefined at zero distance")
    if distance_m < 0 or not height_m > 0:
        raise InvalidArgumentError(
            f"need distance > 0 and height > 0, got d={distance_m}, H={height_m}"
        )
    return math.degrees(math.atan(height_m / distance_m))


def pixel_height(elevation_deg: float, img_height: int, vertical_fov: float = FULL_VERTICAL_FOV_DEG) -> float:
    """Apparent height in fractional pixels: elevation / vfov of the frame height."""
    if vertical_fov <= 0:
        raise InvalidArgumentError(f"vertical_fov must be > 0, got {vertical_fov}")
    return elevation_deg * img_height / vertical_fov


def zoom_box(
    x_pix: float,
    h_pix: float,
    width: int,
    img_height: int,
    padding: float = 0.0,
) -> ZoomBox:
    """Nearly-square crop bounds over the upper half of the landmark.

    The bottom edge sits half the apparent height above the horizon, the top
    edge a full apparent height (plus `padding` extra heights) above it.
    Horizontal bounds are symmetric about x_pix at half the box height, so
    the box is square before any vertical clamping.
    """
    if h_pix <= 0:
        raise DegenerateGeometryError(f"h_pix must be > 0, got {h_pix}")
    if padding < 0:
        raise InvalidArgumentError(f"padding must be >= 0, got {padding}")
    y_bottom = img_height / 2.0 - 0.50 * h_pix
    y_top = img_height / 2.0 - (1.0 + padding) * h_pix
    half = (y_bottom - y_top) / 2.0
    if 2.0 * half > width:
        raise InvalidArgumentError(
            f"zoom box width {2 * half:.1f} exceeds panorama width {width}"
        )
    x_left = x_pix - half
    x_right = x_pix + half

    clamped = y_top < 0
    if clamped:
        y_top = 0.0
    wrapped = x_left < 0 or x_right >= width
    if wrapped:
        x_left %= width
        x_right %= width
    return ZoomBox(
        x_left=x_left,
        x_right=x_right,
        y_top=y_top,
        y_bottom=y_bottom,
        padding=padding,
        wrapped=wrapped,
        clamped=clamped,
    )


def view_geometry(
    pano: PanoramaMeta,
    landmark: Landmark,
    observer_height: float = 0.0,
) -> ViewGeometry:
    """Full localization chain from panorama and landmark metadata.

    `observer_height` (meters, default 0) is subtracted from the landmark
    height before the elevation angle; the level-camera model otherwise
    ignores the observer's own elevation.
    """
    d = distance(pano.location, landmark.location)
    alpha = azimuth(pano.location, landmark.location)
    bearing = relative_bearing(alpha, pano.heading)
    x = pixel_column(bearing, pano.width)
    effective_height = landmark.height - observer_height
    if effective_height <= 0:
        raise InvalidArgumentError(
            f"observer_height {observer_height} leaves no landmark above the camera"
        )
    elev = elevation_angle(effective_height, d)
    h = pixel_height(elev, pano.height, pano.vertical_fov)
    return ViewGeometry(
        distance_m=d,
        azimuth_deg=alpha,
        bearing_deg=bearing,
        x_pix=x,
        elevation_deg=elev,
        h_pix=h,
    )


def localize(
    pano: PanoramaMeta,
    landmark: Landmark,
    padding: float = 0.0,
    observer_height: float = 0.0,
) -> tuple[ViewGeometry, ZoomBox]:
    """View geometry plus the zoom box it implies, in one call."""
    geom = view_geometry(pano, landmark, observer_height=observer_height)
    box = zoom_box(geom.x_pix, geom.h_pix, pano.width, pano.height, padding=padding)
    return geom, box


def round_half_away(value: float) -> int:
    """Round half away from zero; used only when converting bounds to pixels."""
    return int(math.floor(value + 0.5)) if value >= 0 else -int(math.floor(-value + 0.5))


__all__ = [
    "FULL_VERTICAL_FOV_DEG",
    "Landmark",
    "PanoramaMeta",
    "Point",
    "ViewGeometry",
    "ZoomBox",
    "azimuth",
    "distance",
    "elevation_angle",
    "localize",
    "pixel_column",
    "pixel_height",
    "relative_bearing",
    "round_half_away",
    "view_geometry",
    "zoom_box",
]
