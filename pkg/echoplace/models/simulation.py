from dataclasses import dataclass

import numpy as np

from echoplace.choices import CellClassChoices
from echoplace.exceptions import GridError

__all__ = (
    'SimGrid',
    'WaveResult',
)


@dataclass(frozen=True, eq=False)
class SimGrid:
    """
    A uniform, cell-centred grid over the air volume.

    Attributes:
        origin: Position (m) of the lower corner of cell (0, 0, 0)
        spacing: Cell size (m)
        dims: Cell count per axis
        air: Boolean mask of cells whose centre lies in air
        open_faces: Per axis, a mask of the faces between neighbouring cells through which pressure
            propagates. Face i along an axis separates cells i-1 and i, so each mask has one more entry
            than there are cells along that axis.
        face_materials: Per axis, the material index of the surface lying on each face (-1 for none)
        beta: Per-cell boundary loss coefficient
        dt: Time step (s)
        c: Speed of sound (m/s)
        f_max: Highest frequency (Hz) the grid resolves
    """
    origin: np.ndarray
    spacing: float
    dims: tuple
    air: np.ndarray
    open_faces: tuple
    face_materials: tuple
    beta: np.ndarray
    dt: float
    c: float
    f_max: float

    def __repr__(self):
        return f'<SimGrid: {"x".join(map(str, self.dims))} cells, dx={self.spacing:.4f} m, dt={self.dt:.3e} s>'

    @property
    def cell_count(self):
        return int(np.prod(self.dims))

    @property
    def courant(self):
        return self.c * self.dt / self.spacing

    def cell_centers(self, indices):
        return self.origin + (np.asarray(indices, dtype=float) + 0.5) * self.spacing

    def locate(self, point):
        """
        Return the index of the air cell nearest to the given point.
        """
        point = np.asarray(point, dtype=float)
        guess = np.floor((point - self.origin) / self.spacing).astype(int)
        best, best_distance = None, np.inf
        for offset in np.ndindex(3, 3, 3):
            index = guess + np.array(offset) - 1
            if (index < 0).any() or (index >= self.dims).any() or not self.air[tuple(index)]:
                continue
            distance = np.linalg.norm(self.cell_centers(index) - point)
            if distance < best_distance:
                best, best_distance = tuple(int(i) for i in index), distance
        if best is None:
            raise GridError(f"No air cell near {tuple(float(p) for p in point)}")
        return best

    def cell_class(self):
        """
        Classify every cell as air, boundary (an air cell with at least one closed face) or solid.
        """
        closed = np.zeros(self.dims, dtype=bool)
        for axis, faces in enumerate(self.open_faces):
            shut = ~faces
            lower = [slice(None)] * 3
            upper = [slice(None)] * 3
            lower[axis] = slice(0, -1)
            upper[axis] = slice(1, None)
            closed |= shut[tuple(lower)] | shut[tuple(upper)]
        classes = np.full(self.dims, CellClassChoices.SOLID.value, dtype=object)
        classes[self.air] = CellClassChoices.AIR.value
        classes[self.air & closed] = CellClassChoices.BOUNDARY.value
        return classes


@dataclass(frozen=True, eq=False)
class WaveResult:
    """
    Pressure traces (one row per probe) sampled every `dt` seconds.
    """
    traces: np.ndarray
    dt: float
    source: np.ndarray
    probes: np.ndarray
    pulse: np.ndarray

    @property
    def steps(self):
        return self.traces.shape[1]
