"""Spherical-earth geodesy: coordinates and haversine distance."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EARTH_RADIUS_M = 6_378_000.0


class GeoDomainError(ValueError):
    pass


def check_coords(lat, lon) -> None:
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    if not (np.all(np.isfinite(lat)) and np.all(np.isfinite(lon))):
        raise GeoDomainError("coordinates must be finite")
    if np.any(np.abs(lat) > 90.0):
        raise GeoDomainError(f"latitude out of [-90, 90]: {lat[np.abs(lat) > 90.0].ravel()[:3]}")
    if np.any(np.abs(lon) > 180.0):
        raise GeoDomainError(f"longitude out of [-180, 180]: {lon[np.abs(lon) > 180.0].ravel()[:3]}")


@dataclass(frozen=True)
class GeoPoint:
    lat_deg: float
    lon_deg: float

    def __post_init__(self):
        check_coords(self.lat_deg, self.lon_deg)


@dataclass(frozen=True)
class EarthModel:
    radius_m: float = EARTH_RADIUS_M

    def __post_init__(self):
        if self.radius_m != EARTH_RADIUS_M:
            raise GeoDomainError(f"earth radius is fixed at {EARTH_RADIUS_M} m, got {self.radius_m}")


EARTH = EarthModel()


def haversine_m(lat1, lon1, lat2, lon2, radius_m: float = EARTH_RADIUS_M) -> np.ndarray:
    """Vectorised great-circle distance in meters between degree coordinates.

    No range validation; callers holding untrusted data should go through
    :func:`haversine_distance` or validate first.
    """
    phi1 = np.radians(lat1)
    phi2 = np.radians(lat2)
    dphi = phi2 - phi1
    dpsi = np.radians(lon2) - np.radians(lon1)
    h = np.sin(dphi / 2.0) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dpsi / 2.0) ** 2
    # rounding can push h a hair past 1 for antipodal pairs
    h = np.clip(h, 0.0, 1.0)
    return 2.0 * radius_m * np.arcsin(np.sqrt(h))


def haversine_distance(a: GeoPoint, b: GeoPoint, earth: EarthModel = EARTH) -> float:
    """Distance in meters between two points on the sphere."""
    check_coords([a.lat_deg, b.lat_deg], [a.lon_deg, b.lon_deg])
    return float(haversine_m(a.lat_deg, a.lon_deg, b.lat_deg, b.lon_deg, earth.radius_m))


def to_unit_vectors(lat_deg, lon_deg) -> np.ndarray:
    """Degree coordinates to (..., 3) unit vectors on the sphere."""
    phi = np.radians(lat_deg)
    lam = np.radians(lon_deg)
    cphi = np.cos(phi)
    return np.stack([cphi * np.cos(lam), cphi * np.sin(lam), np.sin(phi)], axis=-1)


def from_unit_vectors(xyz: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x, y, z = xyz[..., 0], xyz[..., 1], xyz[..., 2]
    lat = np.degrees(np.arctan2(z, np.hypot(x, y)))
    lon = np.degrees(np.arctan2(y, x))
    return lat, lon


def destination(point: GeoPoint, distance_m: float, bearing_deg: float,
                earth: EarthModel = EARTH) -> GeoPoint:
    """Point reached by travelling ``distance_m`` along a great circle at ``bearing_deg``."""
    delta = distance_m / earth.radius_m
    theta = math.radians(bearing_deg)
    phi1 = math.radians(point.lat_deg)
    lam1 = math.radians(point.lon_deg)
    sin_phi2 = math.sin(phi1) * math.cos(delta) + math.cos(phi1) * math.sin(delta) * math.cos(theta)
    phi2 = math.asin(max(-1.0, min(1.0, sin_phi2)))
    lam2 = lam1 + math.atan2(math.sin(theta) * math.sin(delta) * math.cos(phi1),
                             math.cos(delta) - math.sin(phi1) * sin_phi2)
    lon2 = (math.degrees(lam2) + 540.0) % 360.0 - 180.0
    return GeoPoint(math.degrees(phi2), lon2)


def rotation_between(a: GeoPoint, b: GeoPoint) -> np.ndarray:
    """3x3 rotation matrix carrying ``a`` onto ``b`` about the axis normal to both.

    A sphere rotation preserves every pairwise great-circle distance, so it is
    the rigid way to move a whole route segment.
    """
    u = to_unit_vectors(a.lat_deg, a.lon_deg)
    v = to_unit_vectors(b.lat_deg, b.lon_deg)
    axis = np.cross(u, v)
    s = np.linalg.norm(axis)
    c = float(np.dot(u, v))
    if s < 1e-15:
        if c > 0:
            return np.eye(3)
        raise GeoDomainError("rotation between antipodal points is not unique")
    k = axis / s
    kx = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    # Rodrigues
    return np.eye(3) + s * kx + (1.0 - c) * (kx @ kx)
