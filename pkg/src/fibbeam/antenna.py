"""Array responses, DFT codebooks and multi-panel devices.

Every panel has its own local frame whose boresight is +x. Array axes and
element patterns are expressed in that frame; ``Panel.orientation`` rotates
it into the device frame. Beam indices are zero-based and follow panel order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .rotations import rotation_matrix
from .sphgrid import Direction, DirectionSet, angles_to_vectors, unit_vector


@dataclass(frozen=True)
class ArrayGeometry:
    n_x: int = 1
    n_y: int = 1
    n_z: int = 1

    def __post_init__(self) -> None:
        for n in (self.n_x, self.n_y, self.n_z):
            if int(n) != n or n < 1:
                raise ValueError(f"array dimensions must be positive integers, got {self}")

    @property
    def n_elements(self) -> int:
        return self.n_x * self.n_y * self.n_z

    def as_list(self) -> list[int]:
        return [self.n_x, self.n_y, self.n_z]


@dataclass(frozen=True)
class ElementPattern:
    """Parabolic patch pattern with boresight along +x, or isotropic."""

    max_gain_db: float = 8.0
    hpbw_az_deg: float = 65.0
    hpbw_el_deg: float = 65.0
    front_back_floor_db: float = 30.0
    isotropic: bool = False

    @classmethod
    def iso(cls) -> "ElementPattern":
        return cls(max_gain_db=0.0, isotropic=True)

    def to_dict(self) -> dict:
        return {
            "max_gain_db": self.max_gain_db,
            "hpbw_az_deg": self.hpbw_az_deg,
            "hpbw_el_deg": self.hpbw_el_deg,
            "front_back_floor_db": self.front_back_floor_db,
            "isotropic": self.isotropic,
        }


def _as_vectors(d) -> tuple[np.ndarray, bool]:
    if isinstance(d, Direction):
        return unit_vector(d)[None, :], True
    v = np.asarray(d, dtype=float)
    if v.ndim == 1:
        return v[None, :], True
    return v, False


def element_gain_db(pattern: ElementPattern, vectors: np.ndarray) -> np.ndarray:
    """Power gain in dB for unit vectors (rows) expressed in the panel frame."""
    vectors = np.atleast_2d(vectors)
    if pattern.isotropic:
        return np.zeros(len(vectors))
    az = np.degrees(np.arctan2(vectors[:, 1], vectors[:, 0]))  # (-180, 180]
    el = np.degrees(np.arcsin(np.clip(vectors[:, 2], -1.0, 1.0)))
    attenuation = 12.0 * (az / pattern.hpbw_az_deg) ** 2 + 12.0 * (el / pattern.hpbw_el_deg) ** 2
    return pattern.max_gain_db - np.minimum(attenuation, pattern.front_back_floor_db)


def element_gain_amplitude(pattern: ElementPattern, d) -> float | np.ndarray:
    """Amplitude gain ``10**(G_dB / 20)``; scalar for a single direction."""
    vectors, single = _as_vectors(d)
    amp = 10.0 ** (element_gain_db(pattern, vectors) / 20.0)
    return float(amp[0]) if single else amp


def array_response(geometry: ArrayGeometry, pattern: ElementPattern, d) -> np.ndarray:
    """Steering vector ``g_a / sqrt(N) * a_z kron a_y kron a_x`` with half-wavelength spacing.

    ``d`` is a :class:`Direction` or unit vector(s) in the array frame. Returns shape
    ``(N,)`` for a single direction and ``(m, N)`` for an ``(m, 3)`` input.
    """
    vectors, single = _as_vectors(d)
    ux, uy, uz = vectors[:, 0], vectors[:, 1], vectors[:, 2]
    ax = np.exp(1j * math.pi * np.outer(ux, np.arange(geometry.n_x)))
    ay = np.exp(1j * math.pi * np.outer(uy, np.arange(geometry.n_y)))
    az = np.exp(1j * math.pi * np.outer(uz, np.arange(geometry.n_z)))
    # kron(a_z, kron(a_y, a_x)): element index = iz*ny*nx + iy*nx + ix
    resp = (az[:, :, None, None] * ay[:, None, :, None] * ax[:, None, None, :]).reshape(len(vectors), geometry.n_elements)
    amp = 10.0 ** (element_gain_db(pattern, vectors) / 20.0)
    resp = resp * (amp / math.sqrt(geometry.n_elements))[:, None]
    return resp[0] if single else resp


def _dft_vector(n: int, i: int) -> np.ndarray:
    return np.exp(2j * math.pi * np.arange(n) * i / n)


def dft_beams(geometry: ArrayGeometry) -> np.ndarray:
    """Beam matrix of shape ``(N, N)``; row ``iz*ny*nx + iy*nx + ix`` is beam (iz, iy, ix)."""
    rows = []
    for iz in range(geometry.n_z):
        for iy in range(geometry.n_y):
            for ix in range(geometry.n_x):
                v = np.kron(_dft_vector(geometry.n_z, iz), np.kron(_dft_vector(geometry.n_y, iy), _dft_vector(geometry.n_x, ix)))
                rows.append(v / math.sqrt(geometry.n_elements))
    return np.array(rows)


@dataclass(frozen=True)
class Codebook:
    """Union of per-panel codebooks. ``beams[j]`` lives on panel ``owner_panel[j]``."""

    beams: tuple[np.ndarray, ...]
    owner_panel: np.ndarray = field(compare=False)

    def __len__(self) -> int:
        return len(self.beams)

    def panel_block(self, p: int) -> np.ndarray:
        return np.array([b for b, o in zip(self.beams, self.owner_panel) if o == p])


def dft_codebook(geometry: ArrayGeometry) -> Codebook:
    b = dft_beams(geometry)
    return Codebook(tuple(b), np.zeros(len(b), dtype=int))


@dataclass(frozen=True)
class Panel:
    geometry: ArrayGeometry
    orientation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    pattern: ElementPattern = field(default_factory=ElementPattern)
    name: str = ""

    @property
    def rotation(self) -> np.ndarray:
        return rotation_matrix(*self.orientation)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "geometry": self.geometry.as_list(),
            "orientation": list(self.orientation),
            "pattern": self.pattern.to_dict(),
        }


@dataclass(frozen=True)
class Device:
    """A user terminal: panels, unioned DFT codebook and (optionally) its grid mapping."""

    name: str
    panels: tuple[Panel, ...]
    codebook: Codebook = field(compare=False)
    grid: DirectionSet | None = field(default=None, compare=False)
    fib_map: np.ndarray | None = field(default=None, compare=False)

    @property
    def n_beams(self) -> int:
        return len(self.codebook)

    @property
    def n_fib(self) -> int:
        if self.grid is None:
            raise ValueError(f"device {self.name!r} has no Fibonacci grid attached")
        return self.grid.n_fib

    @property
    def partition(self) -> list[np.ndarray]:
        if self.fib_map is None:
            raise ValueError(f"device {self.name!r} has no fib_map attached")
        return partition_from_map(self.fib_map, self.n_beams)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "panels": [p.to_dict() for p in self.panels],
            "beam_order": "panel-major; within a panel row-major over (iz, iy, ix)",
            "owner_panel": [int(o) for o in self.codebook.owner_panel],
            "n_beams": self.n_beams,
        }


def make_device(name: str, panels: Sequence[Panel]) -> Device:
    panels = tuple(panels)
    beams: list[np.ndarray] = []
    owners: list[int] = []
    for p, panel in enumerate(panels):
        b = dft_beams(panel.geometry)
        beams.extend(b)
        owners.extend([p] * len(b))
    owner = np.array(owners, dtype=int)
    owner.setflags(write=False)
    return Device(name, panels, Codebook(tuple(beams), owner))


def device_from_dict(doc: dict) -> Device:
    panels = []
    for p in doc["panels"]:
        pattern = ElementPattern(**p["pattern"])
        panels.append(Panel(ArrayGeometry(*p["geometry"]), tuple(p["orientation"]), pattern, p.get("name", "")))
    return make_device(doc["name"], panels)


_HALF_PI = math.pi / 2.0


def _edge_panels(pattern: ElementPattern) -> list[Panel]:
    # 4-element ULAs along each edge; boresights -x, +x, +y of the device frame
    ula = ArrayGeometry(1, 4, 1)
    return [
        Panel(ula, (math.pi, 0.0, 0.0), pattern, "edge-x-"),
        Panel(ula, (0.0, 0.0, 0.0), pattern, "edge-x+"),
        Panel(ula, (_HALF_PI, 0.0, 0.0), pattern, "edge-y+"),
    ]


def _face_panels(pattern: ElementPattern) -> list[Panel]:
    # 2x2 UPAs in the screen (xy) plane, facing +z and -z
    upa = ArrayGeometry(1, 2, 2)
    return [
        Panel(upa, (0.0, -_HALF_PI, 0.0), pattern, "face-z+"),
        Panel(upa, (0.0, _HALF_PI, 0.0), pattern, "face-z-"),
    ]


DESIGNS = ("E", "F", "EF")


def build_device(design: str, pattern: ElementPattern | None = None) -> Device:
    """Construct a handset design.

    ``E``, ``F`` and ``EF`` are the edge, face and edge-face placements. ``ULA4`` and
    ``ULA8`` are single-panel isotropic linear arrays used in the dual-band scenario.
    """
    pattern = ElementPattern() if pattern is None else pattern
    if design == "E":
        return make_device("E", _edge_panels(pattern))
    if design == "F":
        return make_device("F", _face_panels(pattern))
    if design == "EF":
        return make_device("EF", _edge_panels(pattern) + _face_panels(pattern))
    if design in ("ULA4", "ULA8"):
        n = int(design[3:])
        return make_device(design, [Panel(ArrayGeometry(1, n, 1), (0.0, 0.0, 0.0), ElementPattern.iso(), "ula")])
    raise ValueError(f"unknown device design {design!r}")


def panel_responses(device: Device, vectors: np.ndarray) -> list[np.ndarray]:
    """Array response of every panel for device-frame unit vectors ``(m, 3)``."""
    out = []
    for panel in device.panels:
        local = vectors @ panel.rotation  # rows of R^T v
        out.append(array_response(panel.geometry, panel.pattern, local))
    return out


def beam_gains(device: Device, vectors: np.ndarray) -> np.ndarray:
    """``|v_j^H a^(p_j)(d)|^2`` for device-frame unit vectors; shape ``(m, n_beams)``."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    cols = []
    for p, resp in enumerate(panel_responses(device, vectors)):
        block = device.codebook.panel_block(p)
        cols.append(np.abs(resp @ block.conj().T) ** 2)
    return np.concatenate(cols, axis=1)


def beam_gain(device: Device, j: int, d) -> float:
    if not 0 <= j < device.n_beams:
        raise ValueError(f"beam index {j} outside [0, {device.n_beams})")
    v = unit_vector(d) if isinstance(d, Direction) else np.asarray(d, dtype=float)
    panel = device.panels[device.codebook.owner_panel[j]]
    resp = array_response(panel.geometry, panel.pattern, panel.rotation.T @ v)
    return float(abs(np.vdot(device.codebook.beams[j], resp)) ** 2)


TIE_RTOL = 1e-9


def best_beams(device: Device, vectors: np.ndarray) -> np.ndarray:
    """Highest-gain beam per direction, ties to the lowest index.

    Gains within ``TIE_RTOL`` (relative) of the maximum count as tied, so mirror-symmetric
    panels resolve the same way regardless of floating-point rounding.
    """
    g = beam_gains(device, vectors)
    return np.argmax(g >= g.max(axis=1, keepdims=True) * (1.0 - TIE_RTOL), axis=1)


def partition_from_map(fib_map: np.ndarray, n_beams: int) -> list[np.ndarray]:
    return [np.flatnonzero(fib_map == j) for j in range(n_beams)]


def fib_beam_map(device: Device, grid: DirectionSet) -> tuple[np.ndarray, list[np.ndarray]]:
    if grid.n_fib < 1:
        raise ValueError("grid must be non-empty")
    fib_map = best_beams(device, grid.vectors)
    return fib_map, partition_from_map(fib_map, device.n_beams)


def attach_grid(device: Device, grid: DirectionSet) -> Device:
    """Return a copy of ``device`` carrying ``grid`` and its direction-to-beam map."""
    fib_map, _ = fib_beam_map(device, grid)
    fib_map.setflags(write=False)
    return replace(device, grid=grid, fib_map=fib_map)


def coverage_diagnostic(device: Device, warn: bool = False) -> list[int]:
    """Beams that own no grid point. Optionally emits a ``UserWarning``."""
    if device.fib_map is None:
        raise ValueError(f"device {device.name!r} has no fib_map attached")
    counts = np.bincount(device.fib_map, minlength=device.n_beams)
    empty = [int(j) for j in np.flatnonzero(counts == 0)]
    if empty and warn:
        warnings.warn(
            f"device {device.name}: beams {empty} own no points of the {device.n_fib}-point grid",
            stacklevel=2,
        )
    return empty


def region_centres(az_steps: int, el_steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Cell-centre azimuths in ``(-pi, pi)`` and elevations in ``(-pi/2, pi/2)``."""
    if az_steps < 1 or el_steps < 1:
        raise ValueError("steps must be >= 1")
    az = -math.pi + (np.arange(az_steps) + 0.5) * (2.0 * math.pi / az_steps)
    el = -_HALF_PI + (np.arange(el_steps) + 0.5) * (math.pi / el_steps)
    return az, el


def beam_region_grid(device: Device, az_steps: int, el_steps: int) -> np.ndarray:
    """Best beam at each (azimuth, elevation) cell centre; shape ``(az_steps, el_steps)``."""
    az, el = region_centres(az_steps, el_steps)
    A, E = np.meshgrid(az, el, indexing="ij")
    vectors = angles_to_vectors(A.ravel(), (_HALF_PI - E).ravel())
    return best_beams(device, vectors).reshape(az_steps, el_steps)
