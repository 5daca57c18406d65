import csv
import logging
import math

import numpy as np

from echoplace.conf import get_config
from echoplace.constants import OCTAVE_BANDS
from echoplace.exceptions import EmptyCandidates
from echoplace.models import CandidateSet, SourceSamples

__all__ = (
    'dump_candidates',
    'dump_sources',
    'nearest_candidate',
    'sample_listeners',
    'sample_sources',
)

# Stratified points are jittered within this central fraction of their cell
JITTER_FRACTION = 0.5


def _strata(lo, hi, spacing):
    """
    Per axis, the number of strata and their width. Axes without extent get a single stratum of width 0.
    """
    extent = np.asarray(hi, dtype=float) - np.asarray(lo, dtype=float)
    counts = [max(1, math.floor(e / spacing + 1e-9)) if e > 0 else 1 for e in extent]
    return np.array(counts), extent / np.array(counts)


def sample_listeners(scene, spacing=None, seed=None, jitter=True):
    """
    Stratified listener candidates: each listener box is divided into cells of roughly `spacing` per
    side, with one point per cell. Points are jittered within the central half of their cell unless
    jitter is False, in which case they sit at the cell centres. Points outside the air are dropped.
    """
    logger = logging.getLogger('echoplace.placement')

    spacing = spacing or get_config('listener_spacing')
    if spacing <= 0:
        raise ValueError(f"Listener spacing must be positive (got {spacing})")
    seed = get_config('seed') if seed is None else seed

    points, box_ids = [], []
    for i, box in enumerate(scene.listener_boxes):
        counts, width = _strata(box.lo, box.hi, spacing)
        cells = np.stack(np.meshgrid(*[np.arange(n) for n in counts], indexing='ij'), axis=-1).reshape(-1, 3)
        if jitter:
            rng = np.random.default_rng([seed, i])
            offset = 0.5 + (rng.random(cells.shape) - 0.5) * JITTER_FRACTION
        else:
            offset = np.full(cells.shape, 0.5)
        points.append(np.asarray(box.lo, dtype=float) + (cells + offset) * width)
        box_ids.append(np.full(len(cells), i))

    if points:
        points, box_ids = np.concatenate(points), np.concatenate(box_ids)
        inside = scene.in_air(points)
        points, box_ids = points[inside], box_ids[inside]
    if not len(points):
        raise EmptyCandidates("No listener candidate lies in the air volume")

    logger.info(f"Sampled {len(points)} listener candidates at {spacing} m spacing")
    return CandidateSet(points=points, box_ids=box_ids, spacing=spacing)


def sample_sources(scene, per_region=None, seed=None):
    """
    Draw `per_region` uniform points in every source region, each carrying its region's weight.
    """
    per_region = int(per_region or get_config('sources_per_region'))
    if per_region < 1:
        raise ValueError(f"At least one source sample per region is needed (got {per_region})")
    seed = get_config('seed') if seed is None else seed

    positions, weights, regions, spectra, clips = [], [], [], [], []
    for i, region in enumerate(scene.sources):
        rng = np.random.default_rng([seed, i])
        lo = np.asarray(region.box.lo, dtype=float)
        hi = np.asarray(region.box.hi, dtype=float)
        positions.append(lo + rng.random((per_region, 3)) * (hi - lo))
        weights.append(np.full(per_region, region.weight))
        regions.append(np.full(per_region, i))
        spectrum = region.spectrum if region.spectrum is not None else (math.nan,) * len(OCTAVE_BANDS)
        spectra.append(np.tile(np.asarray(spectrum, dtype=float), (per_region, 1)))
        clips.extend([region.clip] * per_region)

    if not positions:
        return SourceSamples(
            positions=np.zeros((0, 3)),
            weights=np.zeros(0),
            regions=np.zeros(0, dtype=int),
            spectra=np.zeros((0, len(OCTAVE_BANDS))),
            clips=(),
        )
    return SourceSamples(
        positions=np.concatenate(positions),
        weights=np.concatenate(weights),
        regions=np.concatenate(regions),
        spectra=np.concatenate(spectra),
        clips=tuple(clips),
    )


def nearest_candidate(candidates, point):
    return candidates.nearest(point)


def dump_candidates(path, candidates):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(('x', 'y', 'z', 'box_id'))
        for point, box_id in zip(candidates.points, candidates.box_ids):
            writer.writerow((*(f'{v:.6f}' for v in point), int(box_id)))


def dump_sources(path, samples):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(('x', 'y', 'z', 'box_id', 'weight'))
        for point, region, weight in zip(samples.positions, samples.regions, samples.weights):
            writer.writerow((*(f'{v:.6f}' for v in point), int(region), f'{weight:.6f}'))
