from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from echoplace.constants import OCTAVE_BANDS, SAMPLE_RATE, SPEED_OF_SOUND
from echoplace.geometry import box_triangles, points_in_boxes

__all__ = (
    'Box',
    'Material',
    'NoiseSource',
    'Scene',
    'SourceRegion',
)


@dataclass(frozen=True)
class Box:
    """
    An axis-aligned box. A box may have zero thickness along an axis (a table top, for example).
    """
    lo: tuple
    hi: tuple
    material: str = None

    @property
    def extent(self):
        return np.asarray(self.hi, dtype=float) - np.asarray(self.lo, dtype=float)

    @property
    def volume(self):
        return float(np.prod(np.clip(self.extent, 0, None)))

    @property
    def center(self):
        return (np.asarray(self.lo, dtype=float) + np.asarray(self.hi, dtype=float)) / 2

    def contains(self, points):
        return points_in_boxes(points, [self.lo], [self.hi])

    def triangles(self):
        return box_triangles(self.lo, self.hi)

    def lattice(self, count=5, inset=1e-6):
        """
        Return count^3 points spread over the box (including points near its corners).
        """
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        shrink = np.minimum(inset, (hi - lo) / 2)
        axes = [np.linspace(a + s, b - s, count) for a, b, s in zip(lo, hi, shrink)]
        return np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, 3)


@dataclass(frozen=True)
class Material:
    name: str
    absorption: tuple
    scattering: tuple
    preset: str = None

    @property
    def low_band_absorption(self):
        """
        Mean absorption over the bands handled by the wave solver (125-500 Hz).
        """
        bands = [i for i, fc in enumerate(OCTAVE_BANDS) if fc <= 500]
        return float(np.mean([self.absorption[i] for i in bands]))

    @property
    def mean_scattering(self):
        return float(np.mean(self.scattering))


@dataclass(frozen=True)
class SourceRegion:
    box: Box
    weight: float = 1.0
    clip: str = None
    spectrum: tuple = None


@dataclass(frozen=True)
class NoiseSource:
    position: tuple
    spectrum: tuple


@dataclass(frozen=True, eq=False)
class Scene:
    """
    An immutable acoustic scene. Triangle vertices are held in a read-only (T, 3, 3) array and
    `triangle_materials` maps each triangle to an index into `materials`.
    """
    triangles: np.ndarray
    triangle_materials: np.ndarray
    air: tuple
    materials: tuple
    sources: tuple = ()
    noise: tuple = ()
    listener_boxes: tuple = ()
    speed_of_sound: float = SPEED_OF_SOUND
    sample_rate: int = SAMPLE_RATE
    settings: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))

    def __post_init__(self):
        triangles = np.array(self.triangles, dtype=float).reshape(-1, 3, 3)
        triangle_materials = np.array(self.triangle_materials, dtype=np.int64).reshape(-1)
        triangles.flags.writeable = False
        triangle_materials.flags.writeable = False
        object.__setattr__(self, 'triangles', triangles)
        object.__setattr__(self, 'triangle_materials', triangle_materials)
        object.__setattr__(self, 'settings', MappingProxyType(dict(self.settings)))

    def __repr__(self):
        return (
            f'<Scene: {len(self.triangles)} triangles, {len(self.materials)} materials, '
            f'{len(self.sources)} source regions, {len(self.noise)} noise sources>'
        )

    @property
    def air_bounds(self):
        """
        (lo, hi) of the bounding box around all air boxes.
        """
        los = np.array([box.lo for box in self.air], dtype=float)
        his = np.array([box.hi for box in self.air], dtype=float)
        return los.min(axis=0), his.max(axis=0)

    def in_air(self, points):
        return points_in_boxes(points, [box.lo for box in self.air], [box.hi for box in self.air])

    def material_index(self, name):
        for i, material in enumerate(self.materials):
            if material.name == name:
                return i
        raise KeyError(name)

    def absorption_table(self):
        """
        (M, 7) array of per-band absorption, one row per material.
        """
        return np.array([material.absorption for material in self.materials], dtype=float).reshape(-1, 7)

    def scattering_table(self):
        return np.array([material.scattering for material in self.materials], dtype=float).reshape(-1, 7)
