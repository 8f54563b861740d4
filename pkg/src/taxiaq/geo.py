"""Geographic points and the local equirectangular projection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EARTH_RADIUS_M = 6_371_000.0


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0):
            raise ValueError(f"latitude out of range: {self.lat}")
        if not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"longitude out of range: {self.lon}")


@dataclass(frozen=True)
class PlanarPoint:
    x: float
    y: float


@dataclass(frozen=True)
class Projection:
    """Equirectangular projection about a fixed origin.

    Accurate to well under a metre within ~100 km of the origin, which is
    all the snapping and buffer math needs.
    """

    origin: GeoPoint

    @property
    def _kx(self) -> float:
        return EARTH_RADIUS_M * math.cos(math.radians(self.origin.lat))

    def forward(self, lat, lon):
        """Project lat/lon (scalars or arrays, degrees) to planar metres."""
        x = self._kx * np.radians(np.subtract(lon, self.origin.lon))
        y = EARTH_RADIUS_M * np.radians(np.subtract(lat, self.origin.lat))
        return x, y

    def inverse(self, x, y):
        lon = self.origin.lon + np.degrees(np.divide(x, self._kx))
        lat = self.origin.lat + np.degrees(np.divide(y, EARTH_RADIUS_M))
        return lat, lon


def project(p: GeoPoint, origin: GeoPoint) -> PlanarPoint:
    x, y = Projection(origin).forward(p.lat, p.lon)
    return PlanarPoint(float(x), float(y))


def unproject(p: PlanarPoint, origin: GeoPoint) -> GeoPoint:
    lat, lon = Projection(origin).inverse(p.x, p.y)
    return GeoPoint(float(lat), float(lon))


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(math.sqrt(h))
