"""
Simulated annealing over a discrete candidate set, and the weighted-STI placement objective it
maximizes.
"""
import csv
import functools
import logging
import math
from dataclasses import dataclass

import numpy as np

from echoplace.audio import load_clip
from echoplace.conf import get_config
from echoplace.exceptions import EmptyCandidates
from echoplace.intelligibility import (
    band_energies, band_mean_square, band_snr, intensity_to_level, level_to_intensity, propagate_noise, sti,
)
from echoplace.models import AnnealingTrace, AnnealResult, TraceEntry
from echoplace.signals import objective_evaluated, post_anneal, pre_anneal
from echoplace.solvers import convolve_clip, hybrid_rirs
from echoplace.utilities import parallel_map

__all__ = (
    'Evaluation',
    'PlacementObjective',
    'anneal',
    'permute_state',
    'test_state',
    'write_trace',
)


def test_state(q, q_new, temperature, rng):
    """
    Metropolis acceptance: always accept an improvement, otherwise accept with probability
    exp((q_new - q) / T).
    """
    if temperature <= 0:
        raise ValueError(f"Temperature must be positive (got {temperature})")
    if q_new > q:
        return True
    return bool(rng.random() < math.exp((q_new - q) / temperature))


def permute_state(current, candidates, rng):
    """
    Propose a uniformly random candidate other than `current`. A single candidate proposes itself.
    """
    count = len(candidates)
    if not count:
        raise EmptyCandidates("Cannot propose a state from an empty candidate set")
    if count == 1:
        return current
    proposal = int(rng.integers(count - 1))
    return proposal + 1 if proposal >= current else proposal


def anneal(objective, candidates, params, initial=None):
    """
    Maximize objective(candidate_id) over the candidate set.

    The temperature starts at params.t0 and is multiplied by params.alpha after every proposal until it
    reaches params.t_end. The search also stops after params.k_reject consecutive rejections. The
    best state ever visited is returned.
    """
    logger = logging.getLogger('echoplace.annealer')

    count = len(candidates)
    if not count:
        raise EmptyCandidates("Cannot anneal over an empty candidate set")
    rng = np.random.default_rng(params.seed)
    current = int(rng.integers(count)) if initial is None else int(initial)
    temperature = params.t0

    pre_anneal.send(sender=AnnealResult, candidates=candidates, params=params, initial=current)
    q = objective(current)
    best, best_q = current, q
    initial, initial_q = current, q
    trace = AnnealingTrace()
    trace.append(TraceEntry(0, current, q, temperature, True, best_q))
    logger.info(f"Starting from candidate {current} with objective {q:.4f}")

    rejections = 0
    iteration = 0
    while count > 1 and temperature > params.t_end:
        iteration += 1
        proposal = permute_state(current, candidates, rng)
        q_new = objective(proposal)
        accepted = test_state(q, q_new, temperature, rng)
        if accepted:
            current, q = proposal, q_new
            rejections = 0
            if q > best_q:
                best, best_q = current, q
        else:
            rejections += 1
        trace.append(TraceEntry(iteration, proposal, q_new, temperature, accepted, best_q))
        logger.debug(
            f"Iteration {iteration}: T={temperature:.5f} candidate {proposal} q={q_new:.4f} "
            f"{'accepted' if accepted else 'rejected'}"
        )

        temperature *= params.alpha
        if rejections >= params.k_reject:
            logger.info(f"Stopping after {rejections} consecutive rejections")
            break

    result = AnnealResult(best_id=best, best_q=best_q, initial_id=initial, initial_q=initial_q, trace=trace)
    post_anneal.send(sender=AnnealResult, result=result)
    logger.info(f"Best candidate {best} with objective {best_q:.4f} after {iteration} iterations")
    return result


def write_trace(path, trace):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(('iter', 'candidate_id', 'q', 'T', 'accepted', 'best_q'))
        for entry in trace:
            writer.writerow((
                entry.iteration,
                entry.candidate_id,
                f'{entry.q:.9f}',
                f'{entry.temperature:.9f}',
                int(entry.accepted),
                f'{entry.best_q:.9f}',
            ))


@dataclass(frozen=True)
class Evaluation:
    """
    The objective at one candidate: the weighted sum, the STI of every source sample (None for samples
    with zero weight) and the total noise level (dB SPL) at the candidate, if the scene has noise.
    """
    value: float
    per_source: tuple
    noise_level: float = None


class PlacementObjective:
    """
    The weighted-STI objective sum(w_i * STI(h(s_i, l))) over a candidate set. Evaluations are cached per
    candidate id; every uncached evaluation sends objective_evaluated.
    """
    def __init__(self, scene, candidates, sources, seed=None):
        self.scene = scene
        self.candidates = candidates
        self.sources = sources
        self.seed = get_config('seed') if seed is None else seed
        self.cache = {}
        self.logger = logging.getLogger('echoplace.annealer')

    def __call__(self, candidate_id):
        return self.evaluate(candidate_id).value

    @functools.cached_property
    def _clips(self):
        fs = self.scene.sample_rate
        return {path: load_clip(path, fs) for path in set(self.sources.clips) if path is not None}

    def signal_intensity(self, index, h):
        """
        Mean-square pressure (Pa^2) per band arriving from source sample `index` through response h.
        """
        clip = self.sources.clips[index]
        if clip is not None:
            return band_mean_square(convolve_clip(h, self._clips[clip]), h.sample_rate).values
        return level_to_intensity(self.sources.spectra[index]) * band_energies(h).values

    def evaluate(self, candidate_id):
        if candidate_id in self.cache:
            return self.cache[candidate_id]

        listener = self.candidates[candidate_id]
        count = len(self.sources)
        points = list(self.sources.positions) + [noise.position for noise in self.scene.noise]
        responses = hybrid_rirs(self.scene, listener, points, seed=self.seed)
        noise = propagate_noise(self.scene, listener, responses[count:])

        def source_sti(index):
            if self.sources.weights[index] == 0:
                return None
            h = responses[index]
            snr = None if noise is None else band_snr(self.signal_intensity(index, h), noise)
            return sti(h, snr).sti

        per_source = tuple(parallel_map(source_sti, range(count)))
        value = math.fsum(
            weight * value for weight, value in zip(self.sources.weights, per_source) if value is not None
        )
        noise_level = None
        if noise is not None:
            noise_level = float(intensity_to_level(np.sum(noise.values)))

        evaluation = Evaluation(value=value, per_source=per_source, noise_level=noise_level)
        self.cache[candidate_id] = evaluation
        objective_evaluated.send(sender=PlacementObjective, candidate_id=candidate_id, evaluation=evaluation)
        self.logger.debug(f"Candidate {candidate_id} at {tuple(np.round(listener, 3))}: objective {value:.4f}")
        return evaluation
