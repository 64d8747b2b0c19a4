"""Spherical Fibonacci grids and direction helpers.

Angles follow the physics convention: ``zenith`` is measured from +z and
``azimuth`` from +x towards +y. Grid indices are zero-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

GOLDEN_RATIO = (1.0 + math.sqrt(5.0)) / 2.0
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Direction:
    azimuth: float
    zenith: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.azimuth) and math.isfinite(self.zenith)):
            raise ValueError("direction angles must be finite")
        if not 0.0 <= self.zenith <= math.pi:
            raise ValueError(f"zenith {self.zenith} outside [0, pi]")
        az = math.fmod(self.azimuth, TWO_PI)
        if az < 0.0:
            az += TWO_PI
        if az >= TWO_PI:  # fmod of a tiny negative can round up to 2*pi
            az = 0.0
        object.__setattr__(self, "azimuth", az)

    @classmethod
    def from_vector(cls, v) -> "Direction":
        az, zen = vector_to_angles(np.asarray(v, dtype=float))
        return cls(float(az), float(zen))


def unit_vector(d: Direction) -> np.ndarray:
    """Cartesian unit vector ``(sin t cos p, sin t sin p, cos t)``."""
    st = math.sin(d.zenith)
    return np.array([st * math.cos(d.azimuth), st * math.sin(d.azimuth), math.cos(d.zenith)])


def angles_to_vectors(azimuth, zenith) -> np.ndarray:
    azimuth = np.asarray(azimuth, dtype=float)
    zenith = np.asarray(zenith, dtype=float)
    st = np.sin(zenith)
    return np.stack([st * np.cos(azimuth), st * np.sin(azimuth), np.cos(zenith)], axis=-1)


def vector_to_angles(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(azimuth in [0, 2pi), zenith in [0, pi])`` for vectors along the last axis.

    Zero vectors raise ``ValueError``.
    """
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=-1)
    if np.any(norm == 0.0):
        raise ValueError("cannot convert a zero vector to a direction")
    z = np.clip(v[..., 2] / norm, -1.0, 1.0)
    zen = np.arccos(z)
    az = np.mod(np.arctan2(v[..., 1], v[..., 0]), TWO_PI)
    az = np.where(az >= TWO_PI, 0.0, az)
    return az, zen


@dataclass(frozen=True)
class DirectionSet:
    """Ordered grid of directions; position ``k`` in ``points`` is index ``k``."""

    n_fib: int
    points: tuple[Direction, ...]
    vectors: np.ndarray = field(repr=False, compare=False)

    def __len__(self) -> int:
        return self.n_fib

    @property
    def azimuth(self) -> np.ndarray:
        return np.array([p.azimuth for p in self.points])

    @property
    def zenith(self) -> np.ndarray:
        return np.array([p.zenith for p in self.points])


def fibonacci_grid(n_fib: int) -> DirectionSet:
    """Offset spherical Fibonacci lattice with ``n_fib`` points.

    Point ``k`` has ``z = 1 - (2k + 1) / n_fib`` and azimuth ``2 pi k / golden_ratio``
    wrapped into ``[0, 2 pi)``. The half-step offset keeps every point off the poles.
    """
    if isinstance(n_fib, bool) or not isinstance(n_fib, (int, np.integer)):
        raise TypeError("n_fib must be an integer")
    if n_fib < 1:
        raise ValueError("n_fib must be >= 1")
    n = int(n_fib)
    points = []
    for k in range(n):
        z = 1.0 - (2.0 * k + 1.0) / n
        points.append(Direction(math.fmod(TWO_PI * k / GOLDEN_RATIO, TWO_PI), math.acos(z)))
    points = tuple(points)
    vectors = np.array([unit_vector(p) for p in points])
    vectors.setflags(write=False)
    return DirectionSet(n, points, vectors)


def nearest_index(grid: DirectionSet, d) -> int:
    """Index of the grid point with the largest dot product with ``d`` (lowest index on ties)."""
    v = unit_vector(d) if isinstance(d, Direction) else np.asarray(d, dtype=float)
    return int(np.argmax(grid.vectors @ v))


def nearest_indices(grid: DirectionSet, vectors: np.ndarray) -> np.ndarray:
    """Vectorised :func:`nearest_index` for an ``(m, 3)`` array of unit vectors."""
    return np.argmax(np.asarray(vectors, dtype=float) @ grid.vectors.T, axis=1)


def angular_distance(a: Direction, b: Direction) -> float:
    return math.acos(max(-1.0, min(1.0, float(unit_vector(a) @ unit_vector(b)))))
