import logging

import numpy as np
from scipy import fft, signal

from echoplace.choices import PropagationChoices
from echoplace.conf import get_config
from echoplace.exceptions import AudioError, SampleRateMismatch
from echoplace.models import ImpulseResponse
from echoplace.utilities import derive_seed, parallel_map
from .geometric import histogram_to_rir, image_source_rir, trace_histogram
from .wave import wave_rirs

__all__ = (
    'align_responses',
    'convolve_clip',
    'crossover_combine',
    'crossover_weights',
    'geometric_rir',
    'hybrid_rirs',
)


def crossover_weights(frequencies, f_c):
    """
    Low and high branch magnitudes of a 4th-order Linkwitz-Riley crossover: each branch is a squared
    2nd-order Butterworth magnitude response, and the two sum to one.
    """
    ratio = (np.asarray(frequencies, dtype=float) / f_c) ** 4
    low = 1.0 / (1.0 + ratio)
    return low, 1.0 - low


def align_responses(*responses):
    """
    Shift responses onto a common time origin and pad them to a common length.
    """
    rates = {ir.sample_rate for ir in responses}
    if len(rates) > 1:
        raise SampleRateMismatch(f"Responses have different sample rates: {sorted(rates)}")
    rate = rates.pop()
    t0 = min(ir.t0 for ir in responses)
    shifts = [int(round((ir.t0 - t0) * rate)) for ir in responses]
    length = max(shift + len(ir) for shift, ir in zip(shifts, responses))

    aligned = []
    for shift, ir in zip(shifts, responses):
        samples = np.zeros(length)
        samples[shift:shift + len(ir)] = ir.samples
        aligned.append(ImpulseResponse(samples, rate, t0, ir.provenance))
    return aligned


def crossover_combine(h_wave, h_geo, f_c=None):
    """
    Combine a wave-band and a geometric-band response: H = B_low * H_wave + B_high * H_geo, applied as
    zero-phase magnitudes in the frequency domain.
    """
    if f_c is None:
        f_c = get_config('crossover_hz')
    if h_wave.sample_rate != h_geo.sample_rate:
        raise SampleRateMismatch(
            f"Cannot combine responses at {h_wave.sample_rate} Hz and {h_geo.sample_rate} Hz"
        )
    h_wave, h_geo = align_responses(h_wave, h_geo)
    length = len(h_wave)
    nfft = 1 << int(np.ceil(np.log2(max(2 * length, 2))))
    frequencies = fft.rfftfreq(nfft, 1 / h_wave.sample_rate)
    low, high = crossover_weights(frequencies, f_c)
    spectrum = low * fft.rfft(h_wave.samples, nfft) + high * fft.rfft(h_geo.samples, nfft)
    samples = fft.irfft(spectrum, nfft)[:length]
    return ImpulseResponse(samples, h_wave.sample_rate, h_wave.t0, provenance='hybrid')


def convolve_clip(h, clip):
    """
    Linear convolution of a response with a source clip (already at the response's sample rate).
    """
    clip = np.asarray(clip, dtype=float).reshape(-1)
    if not len(clip):
        raise AudioError("Cannot convolve with an empty clip")
    return signal.fftconvolve(h.samples, clip)


def geometric_rir(scene, source, listener, seed=None):
    """
    The geometric-band response: image sources for the early part and ray tracing for the tail.
    """
    seed = get_config('seed') if seed is None else seed
    early = image_source_rir(scene, source, listener)
    histogram = trace_histogram(scene, source, listener, seed=derive_seed(seed, 'trace', source, listener))
    return histogram_to_rir(
        histogram,
        early,
        scene.sample_rate,
        seed=derive_seed(seed, 'synthesis', source, listener),
    )


def hybrid_rirs(scene, listener, source_points, seed=None):
    """
    Responses h(s_i, listener) for every source point, built according to the `propagation` setting.
    The wave band uses a single run emitting at the listener.
    """
    logger = logging.getLogger('echoplace.hybrid')

    propagation = get_config('propagation')
    if propagation not in PropagationChoices.values:
        raise ValueError(f"Unknown propagation engine '{propagation}'")
    source_points = [np.asarray(point, dtype=float) for point in source_points]
    if not source_points:
        return []
    logger.debug(f"Computing {len(source_points)} {propagation} responses at {tuple(listener)}")

    if propagation == PropagationChoices.WAVE:
        return wave_rirs(scene, listener, source_points)

    geometric = parallel_map(lambda point: geometric_rir(scene, point, listener, seed), source_points)
    if propagation == PropagationChoices.GEOMETRIC:
        return geometric

    low = wave_rirs(scene, listener, source_points)
    return [crossover_combine(h_wave, h_geo) for h_wave, h_geo in zip(low, geometric)]
