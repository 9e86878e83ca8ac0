"""Angular math for d-parameterized sphere-to-plane projection windows.

The projection family maps an angular offset theta from the view axis to a
planar coordinate (d + 1) * sin(theta) / (d + cos(theta)) on the tangent
plane at unit distance.  d = 0 is the perspective (gnomonic) projection,
d = 1 the stereographic one.  The two image axes are projected separably:
the horizontal plane coordinate is driven by the longitude-like offset and
the vertical one by the latitude-like offset.

All angles are radians.  Degrees belong to I/O boundaries only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

TWO_PI = 2.0 * math.pi


class ProjectionDomainError(ValueError):
    """Angular offset or plane coordinate outside the projection's domain."""


def _wrap_lon(lon: float) -> float:
    """Wrap a longitude into [-pi, pi)."""
    lon = math.fmod(lon + math.pi, TWO_PI)
    if lon < 0.0:
        lon += TWO_PI
    return lon - math.pi


@dataclass(frozen=True)
class SphereCoord:
    """Canonical direction on the viewing sphere.

    lat is in [-pi/2, pi/2], lon in [-pi, pi).  At the poles lon is
    canonicalized to 0 so every direction has a unique representation.
    """

    lat: float
    lon: float

    def __post_init__(self):
        lat = float(self.lat)
        if abs(lat) > math.pi / 2 + 1e-12:
            raise ValueError(f"latitude {lat} outside [-pi/2, pi/2]")
        lat = max(-math.pi / 2, min(math.pi / 2, lat))
        lon = _wrap_lon(float(self.lon))
        if abs(lat) == math.pi / 2:
            lon = 0.0
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)


@dataclass(frozen=True)
class PlaneCoord:
    """Position on the unit-distance projection plane, in plane units."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("plane coordinates must be finite")


@dataclass(frozen=True)
class ProjectionParams:
    """Projection-center parameter d plus the angular span of the window."""

    d: float
    fov_h: float
    fov_w: float

    def __post_init__(self):
        if self.d < 0.0:
            raise ValueError("projection parameter d must be >= 0")
        for name, fov in (("fov_h", self.fov_h), ("fov_w", self.fov_w)):
            if not 0.0 < fov <= math.pi:
                raise ValueError(f"{name} must be in (0, pi], got {fov}")
            if self.d == 0.0 and fov >= math.pi:
                raise ValueError("perspective projection requires fov < pi")


@dataclass(frozen=True)
class WindowSpec:
    """A sub-projection window: center direction, projection, raster size."""

    center: SphereCoord
    params: ProjectionParams
    out_w: int
    out_h: int

    def __post_init__(self):
        if self.out_w < 2 or self.out_h < 2:
            raise ValueError("window raster must be at least 2x2")


def _project_axis_array(offset: np.ndarray, d: float) -> np.ndarray:
    """Elementwise projection; NaN where the denominator is non-positive."""
    denom = d + np.cos(offset)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = (d + 1.0) * np.sin(offset) / denom
    return np.where(denom > 0.0, p, np.nan)


def _unproject_axis_array(p: np.ndarray, d: float) -> np.ndarray:
    """Elementwise inverse projection; NaN where p is out of range.

    Substituting t = tan(theta/2) into the projection gives the quadratic
    p*(d-1)*t^2 - 2*(d+1)*t + p*(d+1) = 0; the root continuous with
    theta -> 0 as p -> 0 is t = p / (1 + sqrt(1 - p^2*(d-1)/(d+1))).
    """
    radicand = 1.0 - p * p * (d - 1.0) / (d + 1.0)
    with np.errstate(invalid="ignore"):
        t = p / (1.0 + np.sqrt(radicand))
    theta = 2.0 * np.arctan(t)
    return np.where(radicand >= 0.0, theta, np.nan)


def project_axis(offset: float, d: float) -> float:
    """Map an angular offset from the view axis to a plane coordinate.

    Odd and strictly increasing on its domain.  Raises
    ProjectionDomainError when d + cos(offset) <= 0 or |offset| >= pi.
    """
    if d < 0.0:
        raise ValueError("projection parameter d must be >= 0")
    if abs(offset) >= math.pi:
        raise ProjectionDomainError(f"offset {offset} outside (-pi, pi)")
    denom = d + math.cos(offset)
    if denom <= 0.0:
        raise ProjectionDomainError(
            f"offset {offset} behind the projection for d={d}"
        )
    return (d + 1.0) * math.sin(offset) / denom


def unproject_axis(p: float, d: float) -> float:
    """Inverse of project_axis for the same d.

    Raises ProjectionDomainError when |p| exceeds the projection's range
    (possible only for d > 1, where plane coordinates are bounded).
    """
    if d < 0.0:
        raise ValueError("projection parameter d must be >= 0")
    if not math.isfinite(p):
        raise ValueError("plane coordinate must be finite")
    radicand = 1.0 - p * p * (d - 1.0) / (d + 1.0)
    if radicand < 0.0:
        raise ProjectionDomainError(
            f"plane coordinate {p} outside the range of the d={d} projection"
        )
    t = p / (1.0 + math.sqrt(radicand))
    return 2.0 * math.atan(t)


def plane_extents(params: ProjectionParams) -> tuple[float, float]:
    """Half-extents (X, Y) of the plane rectangle spanned by the FOV."""
    return (
        project_axis(params.fov_w / 2.0, params.d),
        project_axis(params.fov_h / 2.0, params.d),
    )


def window_pixel_to_plane(spec: WindowSpec, px: float, py: float) -> PlaneCoord:
    """Linear raster-to-plane scaling; plane y points up, pixel y down."""
    hx, hy = plane_extents(spec.params)
    return PlaneCoord(
        x=(px - spec.out_w / 2.0) * (2.0 * hx / spec.out_w),
        y=(spec.out_h / 2.0 - py) * (2.0 * hy / spec.out_h),
    )


def plane_to_window_pixel(spec: WindowSpec, p: PlaneCoord) -> tuple[float, float]:
    """Inverse of window_pixel_to_plane."""
    hx, hy = plane_extents(spec.params)
    return (
        p.x / (2.0 * hx / spec.out_w) + spec.out_w / 2.0,
        spec.out_h / 2.0 - p.y / (2.0 * hy / spec.out_h),
    )


def _rotation_world_from_local(center: SphereCoord) -> np.ndarray:
    """Rotation taking the local view frame (axis at lat 0, lon 0) to world.

    World frame: x toward (lat 0, lon 0), y toward (lat 0, lon pi/2),
    z toward the north pole.  No roll: window "up" follows the meridian.
    """
    cla, sla = math.cos(center.lat), math.sin(center.lat)
    clo, slo = math.cos(center.lon), math.sin(center.lon)
    # Rz(lon) @ Ry(-lat)
    return np.array(
        [
            [clo * cla, -slo, -clo * sla],
            [slo * cla, clo, -slo * sla],
            [sla, 0.0, cla],
        ]
    )


def window_rays(
    spec: WindowSpec, px: np.ndarray, py: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized window_to_sphere: continuous window pixels -> (lat, lon).

    px runs rightward in [0, out_w], py downward in [0, out_h]; the raster
    center (out_w/2, out_h/2) maps to spec.center.
    """
    d = spec.params.d
    hx, hy = plane_extents(spec.params)
    plane_x = (np.asarray(px, dtype=np.float64) - spec.out_w / 2.0) * (
        2.0 * hx / spec.out_w
    )
    plane_y = (spec.out_h / 2.0 - np.asarray(py, dtype=np.float64)) * (
        2.0 * hy / spec.out_h
    )
    lon_l = _unproject_axis_array(plane_x, d)
    lat_l = _unproject_axis_array(plane_y, d)

    cl = np.cos(lat_l)
    xl = cl * np.cos(lon_l)
    yl = cl * np.sin(lon_l)
    zl = np.sin(lat_l)
    r = _rotation_world_from_local(spec.center)
    xw = r[0, 0] * xl + r[0, 1] * yl + r[0, 2] * zl
    yw = r[1, 0] * xl + r[1, 1] * yl + r[1, 2] * zl
    zw = r[2, 0] * xl + r[2, 1] * yl + r[2, 2] * zl

    lat = np.arcsin(np.clip(zw, -1.0, 1.0))
    lon = np.arctan2(yw, xw)
    lon = np.where(lon >= math.pi, lon - TWO_PI, lon)
    return lat, lon


@lru_cache(maxsize=8)
def window_grid_rays(spec: WindowSpec) -> tuple[np.ndarray, np.ndarray]:
    """(lat, lon) grids for every pixel center of the window raster.

    Exploits the separable projection: horizontal offsets depend only on
    the column and vertical offsets only on the row, so the per-axis math
    runs on 1-D arrays.  Bit-identical to window_rays over the same grid.
    Cached per spec; the returned arrays are read-only.
    """
    d = spec.params.d
    hx, hy = plane_extents(spec.params)
    plane_x = (np.arange(spec.out_w, dtype=np.float64) + 0.5 - spec.out_w / 2.0) * (
        2.0 * hx / spec.out_w
    )
    plane_y = (spec.out_h / 2.0 - (np.arange(spec.out_h, dtype=np.float64) + 0.5)) * (
        2.0 * hy / spec.out_h
    )
    lon_l = _unproject_axis_array(plane_x, d)  # per column
    lat_l = _unproject_axis_array(plane_y, d)  # per row

    cl = np.cos(lat_l)[:, None]
    zl = np.sin(lat_l)[:, None]
    co = np.cos(lon_l)[None, :]
    so = np.sin(lon_l)[None, :]
    xl = cl * co
    yl = cl * so
    r = _rotation_world_from_local(spec.center)
    xw = r[0, 0] * xl + r[0, 1] * yl + r[0, 2] * zl
    yw = r[1, 0] * xl + r[1, 1] * yl + r[1, 2] * zl
    zw = r[2, 0] * xl + r[2, 1] * yl + r[2, 2] * zl

    lat = np.arcsin(np.clip(zw, -1.0, 1.0))
    lon = np.arctan2(yw, xw)
    lon = np.where(lon >= math.pi, lon - TWO_PI, lon)
    lat.flags.writeable = False
    lon.flags.writeable = False
    return lat, lon


def window_pixels(
    spec: WindowSpec, lat: np.ndarray, lon: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized sphere_to_window: directions -> (px, py, visible mask).

    A direction is visible when its window-local offsets fall inside the
    FOV on both axes; directions behind the projection get NaN pixels.
    """
    d = spec.params.d
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    cl = np.cos(lat)
    xw = cl * np.cos(lon)
    yw = cl * np.sin(lon)
    zw = np.sin(lat)
    r = _rotation_world_from_local(spec.center)
    # transpose = inverse for a rotation
    xl = r[0, 0] * xw + r[1, 0] * yw + r[2, 0] * zw
    yl = r[0, 1] * xw + r[1, 1] * yw + r[2, 1] * zw
    zl = r[0, 2] * xw + r[1, 2] * yw + r[2, 2] * zw

    lat_l = np.arcsin(np.clip(zl, -1.0, 1.0))
    lon_l = np.arctan2(yl, xl)

    eps = 1e-9
    visible = (np.abs(lon_l) <= spec.params.fov_w / 2.0 + eps) & (
        np.abs(lat_l) <= spec.params.fov_h / 2.0 + eps
    )

    hx, hy = plane_extents(spec.params)
    plane_x = _project_axis_array(lon_l, d)
    plane_y = _project_axis_array(lat_l, d)
    px = plane_x / (2.0 * hx / spec.out_w) + spec.out_w / 2.0
    py = spec.out_h / 2.0 - plane_y / (2.0 * hy / spec.out_h)
    visible = visible & np.isfinite(px) & np.isfinite(py)
    return px, py, visible


def window_to_sphere(spec: WindowSpec, px: float, py: float) -> SphereCoord:
    """Map one continuous window pixel coordinate to a canonical direction."""
    lat, lon = window_rays(spec, np.float64(px), np.float64(py))
    if not (np.isfinite(lat) and np.isfinite(lon)):
        raise ProjectionDomainError(
            f"pixel ({px}, {py}) outside the projection domain"
        )
    return SphereCoord(float(lat), float(lon))


def sphere_to_window(
    spec: WindowSpec, s: SphereCoord
) -> tuple[float, float, bool]:
    """Map a direction to window pixels plus a visibility flag.

    Out-of-window directions are flagged, never raised; directions behind
    the projection yield NaN pixel coordinates.
    """
    px, py, visible = window_pixels(
        spec, np.float64(s.lat), np.float64(s.lon)
    )
    return float(px), float(py), bool(visible)


def default_window_plan(out_w: int = 864, out_h: int = 864) -> list[WindowSpec]:
    """Four 180-degree stereographic windows with 90-degree overlap.

    Equatorial centers at longitudes -180, -90, 0 and +90 degrees; every
    direction on the sphere is visible in at least two windows.
    """
    params = ProjectionParams(d=1.0, fov_h=math.pi, fov_w=math.pi)
    lons = (-math.pi, -math.pi / 2, 0.0, math.pi / 2)
    return [
        WindowSpec(SphereCoord(0.0, lon), params, out_w, out_h)
        for lon in lons
    ]
