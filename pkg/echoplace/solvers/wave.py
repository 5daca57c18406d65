"""
Low-frequency propagation: a second-order leapfrog finite-difference time-domain solver for the
acoustic wave equation on a uniform, cell-centred grid.

Surfaces block the faces between neighbouring cells. A blocked face is locally reacting with a
frequency-independent normal-incidence reflection factor R = sqrt(1 - a), where a is the surface
material's mean absorption over the 125-500 Hz bands. Air cells next to a blocked face are updated as

    p[n+1] = (2 p[n] - (1 - beta) p[n-1] + lambda^2 * lap(p[n]) + dt^2 * s[n] / dx^3) / (1 + beta)

with beta = sum over blocked faces of lambda * (1 - R) / (2 * (1 + R)) and lap summing only over open
faces. Interior cells have beta = 0.
"""
import functools
import logging
import math
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import fft, optimize, signal

from echoplace.conf import get_config
from echoplace.constants import SNAPSHOT_MAGIC
from echoplace.exceptions import GridError, SolverInstability
from echoplace.geometry import intersect_rays
from echoplace.models import ImpulseResponse, SimGrid, WaveResult
from echoplace.signals import post_wave_run, pre_wave_run

__all__ = (
    'WaveSolver',
    'build_grid',
    'deconvolve',
    'discrete_energy',
    'dump_snapshot',
    'gaussian_pulse',
    'pulse_width',
    'run_wave',
    'wave_rirs',
)

# Fraction of the 3-D stability bound used for the time step
COURANT_SAFETY = 0.9

# Grids finer than this many points per wavelength are considered accurate
MIN_POINTS_PER_WAVELENGTH = 8

# Spectral attenuation (dB) of the injected pulse at the solver's maximum frequency
PULSE_ATTENUATION_DB = 60.0

# The pulse is centred this many standard deviations after t = 0
PULSE_DELAY = 5.0

# Abort when the pressure exceeds this multiple of the injected peak
INSTABILITY_FACTOR = 1e6

# Steps between instability checks
INSTABILITY_INTERVAL = 64

# Deconvolution regularization relative to the peak pulse spectrum
DECONVOLUTION_EPSILON = 1e-6

# Responses are high-passed with a raised-cosine ramp between these frequencies (Hz)
HIGH_PASS_HZ = (20.0, 40.0)

# Fraction of a trace faded out at its end before deconvolution
END_TAPER_FRACTION = 0.05

# Grids with fewer cells than this are updated on the calling thread
PARALLEL_MIN_CELLS = 200_000


def build_grid(scene, f_max=None, points_per_wavelength=None):
    """
    Build the simulation grid for a scene. Grids are cached per scene and resolution.
    """
    if f_max is None:
        f_max = get_config('wave_max_frequency')
    if points_per_wavelength is None:
        points_per_wavelength = get_config('points_per_wavelength')
    return _build_grid(scene, float(f_max), float(points_per_wavelength), int(get_config('max_cells')))


@functools.lru_cache(maxsize=8)
def _build_grid(scene, f_max, points_per_wavelength, max_cells):
    logger = logging.getLogger('echoplace.wave')

    if f_max <= 0:
        raise GridError(f"Maximum frequency must be positive (got {f_max})")
    if points_per_wavelength <= 0:
        raise GridError(f"Points per wavelength must be positive (got {points_per_wavelength})")
    if points_per_wavelength < MIN_POINTS_PER_WAVELENGTH:
        warnings.warn(
            f"{points_per_wavelength:g} points per wavelength at {f_max:g} Hz is below the recommended "
            f"{MIN_POINTS_PER_WAVELENGTH}; expect dispersion near the crossover"
        )
    if not scene.air:
        raise GridError("The scene has no air volume")

    c = scene.speed_of_sound
    spacing = c / (f_max * points_per_wavelength)
    origin, upper = scene.air_bounds
    extent = upper - origin
    if (extent < spacing).any():
        raise GridError(f"Air volume {tuple(extent)} is too small for one {spacing:.4f} m cell")
    dims = tuple(int(n) for n in np.ceil(extent / spacing - 1e-9))
    cells = int(np.prod(dims))
    if cells > max_cells:
        raise GridError(f"Grid of {cells} cells exceeds the configured maximum of {max_cells}")

    # Air mask from cell centres
    centers = [origin[axis] + (np.arange(dims[axis]) + 0.5) * spacing for axis in range(3)]
    air = np.zeros(dims, dtype=bool)
    for box in scene.air:
        inside = [(centers[axis] >= box.lo[axis]) & (centers[axis] <= box.hi[axis]) for axis in range(3)]
        air |= inside[0][:, None, None] & inside[1][None, :, None] & inside[2][None, None, :]

    face_materials = _surface_faces(scene, origin, spacing, dims)

    dt = COURANT_SAFETY * spacing / (c * math.sqrt(3))
    courant = c * dt / spacing
    absorption = np.array([material.low_band_absorption for material in scene.materials] + [0.0])
    reflection = np.sqrt(1.0 - np.clip(absorption, 0.0, 1.0))
    face_loss = courant * (1.0 - reflection) / (2.0 * (1.0 + reflection))

    padded_air = np.pad(air, 1)
    open_faces = []
    beta = np.zeros(dims)
    for axis in range(3):
        lower = [slice(1, -1)] * 3
        upper = [slice(1, -1)] * 3
        lower[axis] = slice(0, -1)
        upper[axis] = slice(1, None)
        air_below = padded_air[tuple(lower)]
        air_above = padded_air[tuple(upper)]
        materials = face_materials[axis]
        faces = air_below & air_above & (materials < 0)
        open_faces.append(faces)

        # Blocked faces lose energy into the air cells beside them (index -1 selects the rigid entry)
        loss = np.where(faces, 0.0, face_loss[materials])
        below = [slice(None)] * 3
        above = [slice(None)] * 3
        below[axis] = slice(0, -1)
        above[axis] = slice(1, None)
        beta += loss[tuple(above)] + loss[tuple(below)]
    beta *= air

    grid = SimGrid(
        origin=origin,
        spacing=spacing,
        dims=dims,
        air=air,
        open_faces=tuple(open_faces),
        face_materials=tuple(face_materials),
        beta=beta,
        dt=dt,
        c=c,
        f_max=f_max,
    )
    logger.info(f"Built {grid!r} with {int(air.sum())} air cells")
    return grid


def _surface_faces(scene, origin, spacing, dims):
    """
    For each axis, find the faces between neighbouring cell centres (including the ghost cells just
    outside the grid) crossed by a scene triangle. Returns per-axis arrays of material indices, -1
    where no triangle crosses.
    """
    shapes = []
    for axis in range(3):
        shape = list(dims)
        shape[axis] += 1
        shapes.append(tuple(shape))
    face_materials = [np.full(shape, -1, dtype=np.int64) for shape in shapes]

    for triangle, material in zip(scene.triangles, scene.triangle_materials):
        lo = (triangle.min(axis=0) - origin) / spacing
        hi = (triangle.max(axis=0) - origin) / spacing
        for axis in range(3):
            # Face i joins the centres of cells i-1 and i along this axis
            ranges = []
            for other in range(3):
                limit = dims[other] + (1 if other == axis else 0)
                if other == axis:
                    first, last = math.floor(lo[other] - 0.5), math.ceil(hi[other] + 0.5)
                else:
                    first, last = math.ceil(lo[other] - 0.5 - 1e-9), math.floor(hi[other] - 0.5 + 1e-9)
                ranges.append(np.arange(max(first, 0), min(last, limit - 1) + 1))
            if not all(len(r) for r in ranges):
                continue

            index = np.stack(np.meshgrid(*ranges, indexing='ij'), axis=-1).reshape(-1, 3)
            starts = origin + (index + 0.5) * spacing
            starts[:, axis] -= spacing
            directions = np.zeros_like(starts)
            directions[:, axis] = spacing
            distance, _ = intersect_rays(starts, directions, triangle[None], t_min=-1e-12, t_max=1.0 - 1e-12)
            crossed = index[np.isfinite(distance)]
            target = face_materials[axis]
            free = target[tuple(crossed.T)] < 0
            crossed = crossed[free]
            target[tuple(crossed.T)] = material
    return face_materials


def pulse_width(f_max, attenuation_db=PULSE_ATTENUATION_DB):
    """
    Width (s) of the Ricker pulse whose spectrum lies attenuation_db below its peak at f_max.
    """
    # With x = f / f_peak the spectrum relative to its peak is x^2 * exp(1 - x^2), and f_peak = sqrt(2) / (2 pi sigma)
    target = 10 ** (-attenuation_db / 20)
    ratio = optimize.brentq(lambda x: 2 * math.log(x) + 1 - x * x - math.log(target), 1.0, 50.0)
    return math.sqrt(2) * ratio / (2 * math.pi * f_max)


def gaussian_pulse(dt, steps, f_max, amplitude=1.0):
    """
    A Ricker pulse (the second derivative of a Gaussian, negated) with peak `amplitude`, centred PULSE_DELAY
    widths after t = 0. Its first and second time integrals both vanish, so the enclosed grid returns to rest.
    """
    sigma = pulse_width(f_max)
    u = (np.arange(steps) * dt - PULSE_DELAY * sigma) / sigma
    return amplitude * (1 - u * u) * np.exp(-u * u / 2)


class WaveSolver:
    """
    Leapfrog time stepping over a SimGrid. The pressure at the current step is `p`; `p_prev` holds the
    step before.
    """
    def __init__(self, grid, threads=None):
        self.grid = grid
        self.p = np.zeros(grid.dims)
        self.p_prev = np.zeros(grid.dims)
        self.step_count = 0
        courant_sq = grid.courant ** 2
        self._a1 = 2.0 / (1.0 + grid.beta)
        self._a2 = (1.0 - grid.beta) / (1.0 + grid.beta)
        self._a3 = courant_sq / (1.0 + grid.beta)
        self._forcing_scale = grid.dt ** 2 / grid.spacing ** 3

        threads = threads or get_config('threads')
        nx = grid.dims[0]
        if threads > 1 and grid.cell_count >= PARALLEL_MIN_CELLS and nx >= 2 * threads:
            bounds = np.linspace(0, nx, threads + 1).astype(int)
            self.slabs = list(zip(bounds[:-1], bounds[1:]))
        else:
            self.slabs = [(0, nx)]

    def laplacian(self, p, start, end):
        """
        Sum over open faces of (neighbour - cell) for cells start..end-1 along x.
        """
        open_x, open_y, open_z = self.grid.open_faces
        nx = self.grid.dims[0]
        block = p[start:end]
        lap = np.zeros_like(block)

        # Flux through x faces start..end; face f joins cells f-1 and f
        flux = np.zeros((end - start + 1,) + block.shape[1:])
        first, last = max(start, 1), min(end, nx - 1)
        if first <= last:
            flux[first - start:last - start + 1] = open_x[first:last + 1] * (p[first:last + 1] - p[first - 1:last])
        lap += flux[1:] - flux[:-1]

        flux = np.zeros((block.shape[0], block.shape[1] + 1, block.shape[2]))
        flux[:, 1:-1] = open_y[start:end, 1:-1] * np.diff(block, axis=1)
        lap += flux[:, 1:] - flux[:, :-1]

        flux = np.zeros(block.shape[:2] + (block.shape[2] + 1,))
        flux[:, :, 1:-1] = open_z[start:end, :, 1:-1] * np.diff(block, axis=2)
        lap += flux[:, :, 1:] - flux[:, :, :-1]
        return lap

    def _update(self, p_next, start, end):
        s = slice(start, end)
        p_next[s] = (
            self._a1[s] * self.p[s] - self._a2[s] * self.p_prev[s] + self._a3[s] * self.laplacian(self.p, start, end)
        )

    def step(self, cell=None, forcing=0.0, executor=None):
        """
        Advance one time step, injecting `forcing` (a source strength) at `cell`.
        """
        p_next = np.empty_like(self.p)
        if executor is None or len(self.slabs) == 1:
            for start, end in self.slabs:
                self._update(p_next, start, end)
        else:
            list(executor.map(lambda bounds: self._update(p_next, *bounds), self.slabs))
        if cell is not None and forcing:
            p_next[cell] += self._forcing_scale * forcing / (1.0 + self.grid.beta[cell])
        self.p_prev, self.p = self.p, p_next
        self.step_count += 1

    def energy(self):
        return discrete_energy(self.grid, self.p, self.p_prev)


def discrete_energy(grid, p, p_prev):
    """
    Energy of the leapfrog scheme between two consecutive states. It is conserved exactly (to rounding)
    when every boundary is rigid.
    """
    kinetic = np.sum((p - p_prev) ** 2) / (grid.dt * grid.c) ** 2
    potential = 0.0
    for axis, faces in enumerate(grid.open_faces):
        inner = [slice(None)] * 3
        inner[axis] = slice(1, -1)
        potential += np.sum(faces[tuple(inner)] * np.diff(p, axis=axis) * np.diff(p_prev, axis=axis))
    return float(kinetic + potential / grid.spacing ** 2)


def run_wave(grid, emit_at, duration, probes, amplitude=1.0, snapshot=None):
    """
    Emit a band-limited pulse at emit_at and record the pressure at each probe.

    Args:
        grid: SimGrid
        emit_at: Emission point (m); snapped to the nearest air cell
        duration: Simulated time (s)
        probes: Points (m) to record; each is snapped to the nearest air cell
        amplitude: Peak source strength of the pulse
        snapshot: Optional path; the final pressure field is written there with dump_snapshot()
    """
    logger = logging.getLogger('echoplace.wave')

    if duration <= 0:
        raise GridError(f"Duration must be positive (got {duration})")
    source_cell = grid.locate(emit_at)
    probe_cells = [grid.locate(point) for point in probes]
    steps = int(math.ceil(duration / grid.dt))
    pulse = gaussian_pulse(grid.dt, steps, grid.f_max, amplitude)

    pre_wave_run.send(sender=SimGrid, grid=grid, emit_at=emit_at, probes=probes)
    logger.info(f"Running {steps} steps on {grid!r} from cell {source_cell} with {len(probe_cells)} probes")

    solver = WaveSolver(grid)
    peak = solver._forcing_scale * float(np.max(np.abs(pulse)))
    limit = INSTABILITY_FACTOR * peak
    probe_index = tuple(np.array(probe_cells, dtype=np.int64).reshape(-1, 3).T)
    traces = np.zeros((len(probe_cells), steps))

    executor = ThreadPoolExecutor(max_workers=len(solver.slabs)) if len(solver.slabs) > 1 else None
    try:
        for n in range(steps):
            if len(probe_cells):
                traces[:, n] = solver.p[probe_index]
            solver.step(source_cell, pulse[n], executor)
            if n % INSTABILITY_INTERVAL == 0 or n == steps - 1:
                magnitude = float(np.max(np.abs(solver.p)))
                if not math.isfinite(magnitude) or (peak > 0 and magnitude > limit):
                    message = (
                        f"Wave solver diverged at step {n} (t={n * grid.dt:.4f} s): |p|={magnitude:.3e} exceeds "
                        f"{INSTABILITY_FACTOR:.0e} x injected peak {peak:.3e}"
                    )
                    logger.error(message)
                    raise SolverInstability(message)
    finally:
        if executor is not None:
            executor.shutdown()

    if snapshot is not None:
        dump_snapshot(snapshot, solver.p, grid)

    result = WaveResult(
        traces=traces,
        dt=grid.dt,
        source=grid.cell_centers(source_cell),
        probes=np.array([grid.cell_centers(cell) for cell in probe_cells]).reshape(-1, 3),
        pulse=pulse,
    )
    post_wave_run.send(sender=SimGrid, grid=grid, result=result)
    logger.debug(f"Wave run finished after {steps} steps")
    return result


def deconvolve(trace, pulse, dt, f_max):
    """
    Recover the response to a unit impulse from a trace recorded while emitting `pulse`, by regularized
    spectral division. The trace loses its mean and fades out over its last END_TAPER_FRACTION first;
    the result is high-passed between HIGH_PASS_HZ and tapered to zero between f_max and 2 * f_max.
    """
    n = len(trace)
    if n == 0:
        return np.zeros(0)
    trace = np.asarray(trace, dtype=float) - np.mean(trace)
    fade = int(END_TAPER_FRACTION * n)
    if fade > 1:
        trace = trace.copy()
        trace[-fade:] *= signal.windows.hann(2 * fade)[fade:]

    nfft = 1 << int(math.ceil(math.log2(max(2 * n, 2))))
    P = fft.rfft(trace, nfft)
    S = fft.rfft(pulse, nfft)
    peak = np.max(np.abs(S))
    if peak == 0:
        return np.zeros(n)
    epsilon = DECONVOLUTION_EPSILON * peak
    H = P * np.conj(S) / (np.abs(S) ** 2 + epsilon ** 2)

    frequencies = fft.rfftfreq(nfft, dt)
    taper = np.ones_like(frequencies)
    band = (frequencies > f_max) & (frequencies < 2 * f_max)
    taper[band] = np.cos(0.5 * np.pi * (frequencies[band] - f_max) / f_max) ** 2
    taper[frequencies >= 2 * f_max] = 0.0
    low, high = HIGH_PASS_HZ
    taper[frequencies <= low] = 0.0
    ramp = (frequencies > low) & (frequencies < high)
    taper[ramp] *= np.sin(0.5 * np.pi * (frequencies[ramp] - low) / (high - low)) ** 2
    return fft.irfft(H * taper, nfft)[:n]


def wave_rirs(scene, listener, source_points, duration=None):
    """
    Low-band impulse responses h(s_i, listener) for every source point from ONE simulation: the pulse is
    emitted at the listener and the sources are probed, which reciprocity makes equivalent.

    Responses are scaled so that a free-field path of length r has unit area / r, matching the
    geometric responses, and resampled to the scene's sample rate.
    """
    if duration is None:
        duration = get_config('rir_duration')
    grid = build_grid(scene)
    f_max = grid.f_max
    fs = scene.sample_rate
    lead = 2 * PULSE_DELAY * pulse_width(f_max)
    result = run_wave(grid, listener, duration + lead, source_points)

    length = int(round(duration * fs))
    scale = 4 * math.pi * grid.c ** 2 / (grid.dt * fs)
    responses = []
    for trace in result.traces:
        h = deconvolve(trace, result.pulse, grid.dt, f_max)
        padded = np.concatenate([h, np.zeros_like(h)])
        resampled = signal.resample(padded, int(round(len(padded) * grid.dt * fs)))
        samples = np.zeros(length)
        count = min(length, len(resampled))
        samples[:count] = resampled[:count] * scale
        responses.append(ImpulseResponse(samples, fs, provenance='wave'))
    return responses


def dump_snapshot(path, field, grid):
    """
    Write a pressure field: the magic bytes, dims as three little-endian uint32, spacing and dt as
    little-endian float64, then float32 samples in C order.
    """
    with open(path, 'wb') as f:
        f.write(SNAPSHOT_MAGIC)
        f.write(struct.pack('<3I2d', *grid.dims, grid.spacing, grid.dt))
        f.write(np.ascontiguousarray(field, dtype='<f4').tobytes())
