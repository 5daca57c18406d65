"""
High-frequency propagation: image sources for the specular early response and stochastic ray tracing
(specular and diffuse reflection) for the reverberant tail.

Histogram energies are fractions of the emitted energy gathered by a spherical detector. Synthesis
scales them by the detector cross-section, so a free path of length d yields 1 / d^2 and matches the sum
of squares of an impulse of height 1 / d.
"""
import csv
import logging
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import fft

from echoplace.conf import get_config
from echoplace.constants import MIN_PATH_LENGTH, OCTAVE_BANDS
from echoplace.geometry import intersect_rays, plane_groups, points_in_triangles, segments_blocked, triangle_normals
from echoplace.models import EnergyHistogram, ImpulseResponse
from echoplace.signals import post_trace, pre_trace

__all__ = (
    'ImageSource',
    'band_synthesis',
    'dump_histogram',
    'histogram_to_rir',
    'image_source_rir',
    'image_sources',
    'late_band_signals',
    'sabine_t60',
    'schroeder_t60',
    'trace_histogram',
)

# Minimum detector radius (m)
MIN_DETECTOR_RADIUS = 0.1

# Offset (m) applied to reflected ray origins to step off the surface
SURFACE_OFFSET = 1e-6

# Segment parameter slack for occlusion tests, so that legs ending on a surface are not blocked by it
OCCLUSION_EPSILON = 1e-6


@dataclass(frozen=True)
class ImageSource:
    """
    A specular path: its image position, total length (m), reflecting planes (in order from the source)
    and per-band pressure amplitude.
    """
    position: tuple
    distance: float
    planes: tuple
    amplitudes: tuple

    @property
    def order(self):
        return len(self.planes)


def image_sources(scene, source, listener, max_order=None):
    """
    Enumerate the visible image sources up to max_order reflections.
    """
    if max_order is None:
        max_order = get_config('image_source_order')
    if max_order < 0:
        raise ValueError(f"Image source order must be nonnegative (got {max_order})")

    source = np.asarray(source, dtype=float)
    listener = np.asarray(listener, dtype=float)
    planes = plane_groups(scene.triangles)
    absorption = scene.absorption_table()
    results = []

    def visit(image, sequence):
        path = _trace_back(scene, planes, source, listener, image, sequence)
        if path is not None:
            distance, hits = path
            reflection = np.ones(len(OCTAVE_BANDS))
            for triangle in hits:
                reflection = reflection * np.sqrt(1.0 - absorption[scene.triangle_materials[triangle]])
            amplitudes = reflection / max(distance, MIN_PATH_LENGTH)
            if amplitudes.any():
                results.append(ImageSource(
                    position=tuple(float(v) for v in image),
                    distance=float(distance),
                    planes=tuple(sequence),
                    amplitudes=tuple(float(a) for a in amplitudes),
                ))
        if len(sequence) == max_order:
            return
        for index, plane in enumerate(planes):
            if sequence and sequence[-1] == index:
                continue
            # Images lying on a plane have no distinct mirror image in it
            if abs(plane.distance(image)) < 1e-9:
                continue
            visit(plane.mirror(image), sequence + [index])

    visit(source, [])
    return results


def _trace_back(scene, planes, source, listener, image, sequence):
    """
    Walk a candidate path from the listener back to the source through the planes of `sequence` (last
    reflection first). Returns (path length, hit triangle indices in source order), or None when a
    reflection point falls outside its surface or a leg is occluded.
    """
    # Mirror positions of the source after each reflection
    images = [source]
    for index in sequence:
        images.append(planes[index].mirror(images[-1]))

    points = [listener]
    hits = []
    current = listener
    for depth in range(len(sequence), 0, -1):
        plane = planes[sequence[depth - 1]]
        target = images[depth]
        direction = target - current
        denominator = direction @ plane.normal
        if abs(denominator) < 1e-12:
            return None
        t = (plane.offset - current @ plane.normal) / denominator
        if not 0.0 < t < 1.0:
            return None
        point = current + t * direction
        triangles = plane.triangles
        inside = points_in_triangles(point, scene.triangles[triangles])[0]
        if inside < 0:
            return None
        hits.append(int(triangles[inside]))
        points.append(point)
        current = point
    points.append(source)

    starts = np.array(points[:-1])
    ends = np.array(points[1:])
    if segments_blocked(starts, ends, scene.triangles, epsilon=OCCLUSION_EPSILON).any():
        return None
    distance = float(np.linalg.norm(listener - images[-1]))
    return distance, hits[::-1]


def band_synthesis(band_signals, sample_rate):
    """
    Combine one signal per octave band into a single signal. Each band keeps the part of its spectrum
    around its centre frequency through weights that rise and fall linearly in log-frequency between
    neighbouring centres; the weights sum to one at every frequency, so identical band signals pass
    through unchanged.
    """
    band_signals = np.atleast_2d(band_signals)
    n = band_signals.shape[1]
    nfft = 2 * n
    frequencies = fft.rfftfreq(nfft, 1 / sample_rate)
    weights = _band_weights(frequencies)
    spectrum = np.sum(fft.rfft(band_signals, nfft, axis=1) * weights, axis=0)
    return fft.irfft(spectrum, nfft)[:n]


def _band_weights(frequencies):
    centres = np.log2(OCTAVE_BANDS)
    with np.errstate(divide='ignore'):
        position = np.log2(np.maximum(frequencies, 1e-12))
    weights = np.zeros((len(OCTAVE_BANDS), len(frequencies)))
    for k, centre in enumerate(centres):
        if k == 0:
            weights[k] = np.where(position <= centre, 1.0, np.clip(1.0 - (position - centre), 0.0, 1.0))
        elif k == len(centres) - 1:
            weights[k] = np.where(position >= centre, 1.0, np.clip(1.0 - (centre - position), 0.0, 1.0))
        else:
            weights[k] = np.clip(1.0 - np.abs(position - centre), 0.0, 1.0)
    return weights


def image_source_rir(scene, source, listener, max_order=None, sample_rate=None, duration=None):
    """
    The specular early response: one impulse per visible image source at t = d / c, filtered per band
    by the product of the reflection factors along its path.
    """
    sample_rate = sample_rate or scene.sample_rate
    if duration is None:
        duration = get_config('rir_duration')
    length = int(round(duration * sample_rate))

    trains = np.zeros((len(OCTAVE_BANDS), length))
    for image in image_sources(scene, source, listener, max_order):
        delay = int(round(image.distance / scene.speed_of_sound * sample_rate))
        if delay < length:
            trains[:, delay] += image.amplitudes
    return ImpulseResponse(band_synthesis(trains, sample_rate), sample_rate, provenance='image-source')


def _lambert_directions(normals, rng):
    """
    Cosine-weighted directions on the hemispheres around the given unit normals.
    """
    u1, u2 = rng.random(len(normals)), rng.random(len(normals))
    radius = np.sqrt(u1)
    theta = 2 * np.pi * u2
    helper = np.where(np.abs(normals[:, :1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    tangent = np.cross(normals, helper)
    tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
    bitangent = np.cross(normals, tangent)
    return (
        (radius * np.cos(theta))[:, None] * tangent +
        (radius * np.sin(theta))[:, None] * bitangent +
        np.sqrt(1.0 - u1)[:, None] * normals
    )


def trace_histogram(scene, source, listener, ray_count=None, seed=None, duration=None):
    """
    Trace rays from source and gather the energy passing a spherical detector around listener.

    Rays leave uniformly over the sphere with energy 1 / ray_count per band. At each surface hit the
    energy is scaled by (1 - absorption) per band and the ray continues specularly with probability
    1 - s or in a cosine-weighted direction with probability s, s being the surface's mean scattering.
    Rays are dropped below `ray_energy_threshold` or after `max_ray_time`. Rays are traced in batches of
    `ray_batch_size`, each drawing from a stream seeded by (seed, batch index).
    """
    logger = logging.getLogger('echoplace.geometric')

    ray_count = int(ray_count or get_config('rays'))
    if ray_count <= 0:
        raise ValueError(f"Ray count must be positive (got {ray_count})")
    seed = get_config('seed') if seed is None else seed
    duration = duration or get_config('rir_duration')
    bin_width = get_config('bin_width')
    batch_size = get_config('ray_batch_size')
    threshold = get_config('ray_energy_threshold')
    max_time = get_config('max_ray_time')
    c = scene.speed_of_sound

    source = np.asarray(source, dtype=float)
    listener = np.asarray(listener, dtype=float)
    bins = int(math.ceil(duration / bin_width - 1e-9))
    radius = max(MIN_DETECTOR_RADIUS, bin_width * c / 2)
    energy_table = 1.0 - scene.absorption_table()
    scattering = scene.scattering_table().mean(axis=1)
    normals = triangle_normals(scene.triangles)
    materials = scene.triangle_materials
    histogram = np.zeros((len(OCTAVE_BANDS), bins))
    escaped = 0

    pre_trace.send(sender=EnergyHistogram, scene=scene, source=source, listener=listener, ray_count=ray_count)
    logger.debug(f"Tracing {ray_count} rays from {tuple(source)} to {tuple(listener)} (detector radius {radius} m)")

    for batch, start in enumerate(range(0, ray_count, batch_size)):
        rng = np.random.default_rng([seed, batch])
        count = min(batch_size, ray_count - start)
        z = rng.uniform(-1.0, 1.0, count)
        phi = rng.uniform(0.0, 2 * np.pi, count)
        ring = np.sqrt(1.0 - z * z)
        directions = np.stack([ring * np.cos(phi), ring * np.sin(phi), z], axis=1)
        origins = np.repeat(source[None], count, axis=0)
        energy = np.full((count, len(OCTAVE_BANDS)), 1.0 / ray_count)
        travelled = np.zeros(count)

        while len(origins):
            distance, triangle = intersect_rays(origins, directions, scene.triangles)
            leaving = ~np.isfinite(distance)
            remaining = np.maximum(max_time * c - travelled, 0.0)
            segment = np.where(leaving, remaining, np.minimum(distance, remaining))

            # Detector: closest approach to the listener along each segment
            offset = listener - origins
            along = np.clip(np.einsum('ij,ij->i', offset, directions), 0.0, segment)
            miss = np.linalg.norm(offset - along[:, None] * directions, axis=1)
            arrival = ((travelled + along) / c / bin_width).astype(np.int64)
            detected = (miss <= radius) & (arrival < bins)
            if detected.any():
                np.add.at(histogram.T, arrival[detected], energy[detected])

            escaped += int(np.count_nonzero(leaving & (remaining > 0)))
            alive = ~leaving & (travelled + distance < max_time * c)
            origins, directions = origins[alive], directions[alive]
            distance, triangle = distance[alive], triangle[alive]
            energy, travelled = energy[alive], travelled[alive] + distance
            if not len(origins):
                break

            normal = normals[triangle]
            facing = np.einsum('ij,ij->i', normal, directions)
            normal = np.where(facing[:, None] > 0, -normal, normal)
            hit = origins + distance[:, None] * directions
            energy = energy * energy_table[materials[triangle]]

            specular = directions - 2.0 * np.einsum('ij,ij->i', directions, normal)[:, None] * normal
            diffuse = _lambert_directions(normal, rng)
            scatter = rng.random(len(directions)) < scattering[materials[triangle]]
            directions = np.where(scatter[:, None], diffuse, specular)
            directions /= np.linalg.norm(directions, axis=1, keepdims=True)
            origins = hit + SURFACE_OFFSET * normal

            alive = energy.max(axis=1) * ray_count >= threshold
            origins, directions = origins[alive], directions[alive]
            energy, travelled = energy[alive], travelled[alive]

    escaped_fraction = escaped / ray_count
    if escaped_fraction > get_config('leak_threshold'):
        warnings.warn(f"{escaped_fraction:.1%} of rays escaped the mesh; check it is closed around the air volume")

    result = EnergyHistogram(
        bin_width=bin_width, energy=histogram, escaped_fraction=escaped_fraction, detector_radius=radius,
    )
    post_trace.send(sender=EnergyHistogram, scene=scene, histogram=result)
    return result


def late_band_signals(histogram, sample_rate, seed):
    """
    Per-band noise signals whose energy in each histogram bin follows the histogram. Returns an array of
    shape (7, samples).
    """
    bin_width = histogram.bin_width
    if bin_width < 1 / sample_rate:
        raise ValueError(f"Bin width {bin_width} s is shorter than one sample at {sample_rate} Hz")
    length = int(round(histogram.duration * sample_rate))
    edges = np.round(np.arange(histogram.bins + 1) * bin_width * sample_rate).astype(int)
    centres = (edges[:-1] + edges[1:] - 1) / 2
    frequencies = fft.rfftfreq(length, 1 / sample_rate)
    samples = np.arange(length)

    signals = np.zeros((len(OCTAVE_BANDS), length))
    for k, fc in enumerate(OCTAVE_BANDS):
        energy = histogram.energy[k]
        total = energy.sum()
        if total <= 0:
            continue
        rng = np.random.default_rng([seed, k])
        mask = (frequencies >= fc / math.sqrt(2)) & (frequencies < fc * math.sqrt(2))
        noise = fft.irfft(fft.rfft(rng.standard_normal(length)) * mask, length)
        noise /= np.sqrt(np.mean(noise ** 2))

        # Amplitude envelope through the bin centres, rescaled to the band's total energy
        envelope = np.interp(samples, centres, np.sqrt(energy / np.diff(edges)))
        shaped = envelope * noise
        shaped_energy = np.sum(shaped ** 2)
        if shaped_energy > 0:
            signals[k] = shaped * np.sqrt(total / shaped_energy)
    return signals


def histogram_to_rir(histogram, early=None, sample_rate=None, seed=0, early_cutoff=None):
    """
    Synthesize a pressure response from an energy histogram, scaled by its pressure_scale. When an early
    response is given it replaces the histogram bins starting before early_cutoff.
    """
    if early is None and sample_rate is None:
        raise ValueError("A sample rate is needed when no early response is given")
    sample_rate = sample_rate or early.sample_rate
    if early is not None:
        cutoff = get_config('early_cutoff') if early_cutoff is None else early_cutoff
        keep = histogram.bin_starts() >= cutoff - 1e-12
        histogram = replace(histogram, energy=histogram.energy * keep)
    histogram = replace(histogram, energy=histogram.energy * histogram.pressure_scale, detector_radius=None)

    # The band signals occupy disjoint octaves, so they add without reweighting
    late = late_band_signals(histogram, sample_rate, seed).sum(axis=0)
    if early is None:
        return ImpulseResponse(late, sample_rate, provenance='ray-tracing')

    length = max(len(late), len(early))
    samples = np.zeros(length)
    samples[:len(late)] += late
    samples[:len(early)] += early.samples
    return ImpulseResponse(samples, sample_rate, provenance='geometric')


def schroeder_t60(energy, rate, start_db=-5.0, end_db=-35.0):
    """
    Reverberation time from backward integration of a squared response sampled at `rate`, fitting a line
    between start_db and end_db and extrapolating to 60 dB.
    """
    energy = np.asarray(energy, dtype=float)
    decay = np.cumsum(energy[::-1])[::-1]
    if decay[0] <= 0:
        raise ValueError("Cannot estimate a decay from a silent response")
    with np.errstate(divide='ignore'):
        level = 10 * np.log10(decay / decay[0])
    region = (level <= start_db) & (level >= end_db)
    if np.count_nonzero(region) < 2 or level.min() > end_db:
        raise ValueError(f"The response does not decay by {-end_db:g} dB")
    times = np.arange(len(energy)) / rate
    slope, _ = np.polyfit(times[region], level[region], 1)
    return -60.0 / slope


def sabine_t60(scene, volume=None):
    """
    Sabine reverberation time 0.161 V / sum(S a), using each surface's band-mean absorption.
    """
    from echoplace.scene import scene_volume

    volume = scene_volume(scene) if volume is None else volume
    edges = scene.triangles[:, 1:] - scene.triangles[:, :1]
    areas = 0.5 * np.linalg.norm(np.cross(edges[:, 0], edges[:, 1]), axis=1)
    absorption = scene.absorption_table().mean(axis=1)[scene.triangle_materials]
    return 0.161 * volume / float(np.sum(areas * absorption))


def dump_histogram(path, histogram):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(('band_hz', 'bin_start_s', 'energy'))
        starts = histogram.bin_starts()
        for fc, energies in zip(OCTAVE_BANDS, histogram.energy):
            for start, energy in zip(starts, energies):
                writer.writerow((fc, f'{start:.6f}', f'{energy:.9e}'))
