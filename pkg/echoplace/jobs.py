import json
import logging
import string
import time
from pathlib import Path

import numpy as np
import trimesh

from echoplace import __version__
from echoplace.annealer import PlacementObjective, anneal, write_trace
from echoplace.audio import read_rir
from echoplace.choices import PropagationChoices
from echoplace.conf import get_config
from echoplace.constants import DEFAULT_SOURCE_LEVEL, OCTAVE_BANDS
from echoplace.exceptions import SceneInvalid
from echoplace.intelligibility import (
    band_energies, band_snr, empirical_sti, empirical_t60, level_to_intensity, read_noise_csv, sti, sti_rating,
)
from echoplace.models import AnnealParams, RunReport
from echoplace.placement import dump_candidates, dump_sources, sample_listeners, sample_sources
from echoplace.scene import load_scene_file, scene_digest, scene_volume
from echoplace.solvers import hybrid_rirs
from echoplace.utilities import ListHandler, activate_settings, derive_seed

__all__ = (
    'BaselineJob',
    'FieldMapJob',
    'OptimizeJob',
    'StiJob',
    'ValidateJob',
)

# Radius (m) of the sphere marking the chosen position
MARKER_RADIUS = 0.05

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


def get_job_log(job):
    """
    Initialize and return the job log.
    """
    job.data = {
        'log': list()
    }
    return job.data['log']


class Job:
    """
    A unit of work behind one CLI command. Output files go to `out_dir` (when given), along with a
    run.log holding everything logged under "echoplace" while the job ran.
    """
    class Meta:
        name = None

    def __init__(self, out_dir=None):
        self.out_dir = Path(out_dir) if out_dir else None
        self.data = {}

    @property
    def name(self):
        return self.Meta.name

    def output(self, filename):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir / filename

    def start(self, *args, **kwargs):
        """
        Run the job with its log attached and record the wall time.
        """
        handler = ListHandler(queue=get_job_log(self))
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root = logging.getLogger('echoplace')
        level = root.level
        root.setLevel(logging.DEBUG)
        root.addHandler(handler)
        started = time.monotonic()

        try:
            return self.run(*args, **kwargs)
        finally:
            logging.getLogger(f'echoplace.jobs.{self.name}').info(
                f"Finished {self.name} in {time.monotonic() - started:.2f} s"
            )
            root.removeHandler(handler)
            root.setLevel(level)
            if self.out_dir is not None:
                self.output('run.log').write_text('\n'.join(self.data['log']) + '\n')

    def run(self, *args, **kwargs):
        raise NotImplementedError


class ValidateJob(Job):
    """
    Load a scene config and report its violations.
    """
    class Meta:
        name = 'validate'

    def run(self, config):
        logger = logging.getLogger('echoplace.jobs.validate')
        try:
            load_scene_file(config)
        except SceneInvalid as e:
            logger.info(f"{config}: {len(e.violations)} violations")
            return e.violations
        logger.info(f"{config}: valid")
        return []


class OptimizeJob(Job):
    """
    Find the listener candidate maximizing the weighted STI of the scene's sources.
    """
    class Meta:
        name = 'optimize'

    def run(self, scene, seed, start_at=None):
        logger = logging.getLogger('echoplace.jobs.optimize')

        candidates = sample_listeners(scene, seed=derive_seed(seed, 'listeners'))
        sources = sample_sources(scene, seed=derive_seed(seed, 'sources'))
        logger.info(f"Optimizing over {len(candidates)} candidates with {len(sources)} source samples")
        if self.out_dir is not None:
            dump_candidates(self.output('candidates.csv'), candidates)
            dump_sources(self.output('sources.csv'), sources)

        objective = PlacementObjective(scene, candidates, sources, seed=seed)
        params = AnnealParams.from_settings(seed=derive_seed(seed, 'anneal'))
        initial = candidates.nearest(start_at) if start_at is not None else None
        result = anneal(objective, candidates, params, initial=initial)

        before = objective.evaluate(result.initial_id)
        after = objective.evaluate(result.best_id)
        per_source = []
        for i, (position, weight) in enumerate(zip(sources.positions, sources.weights)):
            entry = {
                'position': [round(float(v), 6) for v in position],
                'region': int(sources.regions[i]),
                'weight': float(weight),
                'sti_before': before.per_source[i],
                'sti_after': after.per_source[i],
            }
            for key in ('before', 'after'):
                value = entry[f'sti_{key}']
                entry[f'rating_{key}'] = sti_rating(value) if value is not None else None
            per_source.append(entry)

        noise_levels = {}
        if before.noise_level is not None:
            noise_levels = {'initial': before.noise_level, 'best': after.noise_level}

        report = RunReport(
            scene_digest=scene_digest(scene),
            seed=seed,
            best_position=tuple(round(float(v), 6) for v in candidates[result.best_id]),
            best_objective=result.best_q,
            initial_position=tuple(round(float(v), 6) for v in candidates[result.initial_id]),
            initial_objective=result.initial_q,
            iterations=result.trace.iterations,
            per_source=per_source,
            parameters={
                'candidates': len(candidates),
                'source_samples': len(sources),
                't0': params.t0,
                'alpha': params.alpha,
                'k_reject': params.k_reject,
                't_end': params.t_end,
                'listener_spacing': candidates.spacing,
                'rays': get_config('rays'),
                'crossover_hz': get_config('crossover_hz'),
                'propagation': get_config('propagation'),
            },
            version=__version__,
            noise_levels=noise_levels,
        )

        if self.out_dir is not None:
            self.output('report.json').write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True) + '\n')
            write_trace(self.output('trace.csv'), result.trace)
            marker = trimesh.creation.icosphere(subdivisions=2, radius=MARKER_RADIUS)
            marker.apply_translation(candidates[result.best_id])
            marker.export(str(self.output('optimum.obj')))
        logger.info(
            f"Objective improved from {result.initial_q:.4f} to {result.best_q:.4f} "
            f"at {report.best_position}"
        )
        return report, result


class FieldMapJob(Job):
    """
    Evaluate the weighted-STI objective at every point of a regular grid over the listener boxes.
    """
    class Meta:
        name = 'field-map'

    def run(self, scene, seed, spacing=None):
        logger = logging.getLogger('echoplace.jobs.field-map')

        candidates = sample_listeners(scene, spacing=spacing, jitter=False)
        sources = sample_sources(scene, seed=derive_seed(seed, 'sources'))
        objective = PlacementObjective(scene, candidates, sources, seed=seed)
        logger.info(f"Evaluating {len(candidates)} grid points")

        rows = []
        for i, point in enumerate(candidates.points):
            rows.append((*point, objective(i)))
        if self.out_dir is not None:
            lines = ['x,y,z,sti_objective'] + [f'{x:.6f},{y:.6f},{z:.6f},{q:.9f}' for x, y, z, q in rows]
            self.output('field.csv').write_text('\n'.join(lines) + '\n')
        return rows


class StiJob(Job):
    """
    STI of a stored impulse response, optionally under a noise spectrum measured at the listener.
    """
    class Meta:
        name = 'sti'

    def run(self, rir, noise=None, speech_level=DEFAULT_SOURCE_LEVEL):
        logger = logging.getLogger('echoplace.jobs.sti')

        h = read_rir(rir)
        snr = None
        if noise is not None:
            levels = read_noise_csv(noise)
            speech = np.full(len(OCTAVE_BANDS), speech_level)
            snr = band_snr(band_energies(h), level_to_intensity(levels.values), speech_levels=speech)
        result = sti(h, snr)
        logger.info(f"{rir}: STI {result.sti:.4f} ({result.rating})")
        return result


class BaselineJob(Job):
    """
    Empirical reverberation and intelligibility estimates from room volume, optionally next to simulated
    STI for given source/listener pairs.
    """
    class Meta:
        name = 'baseline'

    def run(self, volume=None, t60=None, scene=None, pairs=()):
        logger = logging.getLogger('echoplace.jobs.baseline')

        if t60 is None:
            if volume is None:
                volume = scene_volume(scene)
            t60 = empirical_t60(volume)
        estimate = empirical_sti(t60)
        logger.info(f"Empirical T60 {t60:.3f} s, STI {estimate:.4f}")

        rows = []
        for label, (source, listener) in zip(string.ascii_lowercase, pairs):
            values = {}
            for engine in (PropagationChoices.HYBRID, PropagationChoices.GEOMETRIC):
                with activate_settings({'propagation': engine.value}):
                    h = hybrid_rirs(scene, listener, [source])[0]
                values[engine.value] = sti(h).sti
            rows.append({
                'pair': label,
                'hybrid': values[PropagationChoices.HYBRID],
                'geometric': values[PropagationChoices.GEOMETRIC],
                'empirical': estimate,
            })
            logger.info(f"Pair {label}: hybrid {rows[-1]['hybrid']:.4f}, geometric {rows[-1]['geometric']:.4f}")

        return {'volume': volume, 't60': t60, 'sti': estimate, 'pairs': rows}
