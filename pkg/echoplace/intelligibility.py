"""
Speech Transmission Index from impulse responses: octave-band filtering, modulation transfer from the
squared band responses, band signal-to-noise ratios with auditory masking and reception thresholds, and
the weighted index with its quality rating.
"""
import csv
import functools
import logging
import math
import warnings

import numpy as np
from scipy import signal

from echoplace.choices import BandUnitChoices
from echoplace.conf import get_config
from echoplace.constants import (
    APPARENT_SNR_LIMIT, EMPIRICAL_STI_COEFFICIENTS, EMPIRICAL_T60_COEFFICIENTS, MODULATION_FREQUENCIES,
    OCTAVE_BANDS, RECEPTION_THRESHOLD, REFERENCE_PRESSURE, STI_RATING_FLOOR, STI_RATINGS, STI_WEIGHTS,
    UPPER_BAND_EDGE,
)
from echoplace.exceptions import ConfigNotFound, ModelValidityError, SampleRateTooLow
from echoplace.models import BandSpectrum, ImpulseResponse, MtfMatrix, StiResult
from echoplace.solvers import hybrid_rirs

__all__ = (
    'band_energies',
    'band_mean_square',
    'band_snr',
    'empirical_sti',
    'empirical_t60',
    'intensity_to_level',
    'level_to_intensity',
    'mtf',
    'octave_filter',
    'propagate_noise',
    'read_noise_csv',
    'sti',
    'sti_from_mtf',
    'sti_rating',
)

# Butterworth prototype order; the bandpass has twice this order and is applied forwards and backwards
FILTER_ORDER = 3

# Zeros (s) added on both sides before filtering so the zero-phase response is not cut off
FILTER_PADDING = 0.25

# Modulation transfer is integrated up to the point where the backward-integrated energy has fallen
# this far (dB)
MTF_DYNAMIC_RANGE = 60.0


def level_to_intensity(levels):
    """
    Convert sound pressure levels (dB SPL) to mean-square pressure (Pa^2).
    """
    return REFERENCE_PRESSURE ** 2 * 10 ** (np.asarray(levels, dtype=float) / 10)


def intensity_to_level(intensities):
    with np.errstate(divide='ignore'):
        return 10 * np.log10(np.asarray(intensities, dtype=float) / REFERENCE_PRESSURE ** 2)


@functools.lru_cache(maxsize=None)
def _filter_bank(sample_rate):
    if sample_rate < 2 * UPPER_BAND_EDGE:
        raise SampleRateTooLow(
            f"A sample rate of {sample_rate} Hz cannot represent the {OCTAVE_BANDS[-1]} Hz octave band "
            f"(needs at least {2 * UPPER_BAND_EDGE:.0f} Hz)"
        )
    return tuple(
        signal.butter(FILTER_ORDER, [fc / math.sqrt(2), fc * math.sqrt(2)], 'bandpass', fs=sample_rate, output='sos')
        for fc in OCTAVE_BANDS
    )


def _band_signals(samples, sample_rate):
    """
    Zero-phase octave-band versions of `samples`, keeping the padding on both sides.
    """
    bank = _filter_bank(sample_rate)
    pad = int(round(FILTER_PADDING * sample_rate))
    padded = np.concatenate([np.zeros(pad), np.asarray(samples, dtype=float), np.zeros(pad)])
    return np.array([signal.sosfiltfilt(sos, padded, padtype=None) for sos in bank])


def octave_filter(h, sample_rate=None):
    """
    Filter a response (an ImpulseResponse or a sample array with its rate) into the seven octave bands.
    Returns an array of shape (7, len(h)).
    """
    if isinstance(h, ImpulseResponse):
        samples, sample_rate = h.samples, h.sample_rate
    else:
        samples = np.asarray(h, dtype=float)
    pad = int(round(FILTER_PADDING * sample_rate))
    return _band_signals(samples, sample_rate)[:, pad:pad + len(samples)]


def mtf(h_k, snr=math.inf, sample_rate=None):
    """
    Modulation transfer ratios of one band-filtered response at the 14 modulation frequencies, reduced by
    the noise factor 1 / (1 + 10^(-snr/10)). A silent band transfers no modulation.
    """
    if isinstance(h_k, ImpulseResponse):
        h_k, sample_rate = h_k.samples, h_k.sample_rate
    energy = np.asarray(h_k, dtype=float) ** 2
    total = energy.sum()
    if total <= 0 or snr == -math.inf:
        return np.zeros(len(MODULATION_FREQUENCIES))

    # Truncate where the remaining energy has fallen below the dynamic range
    remaining = np.cumsum(energy[::-1])[::-1]
    end = int(np.flatnonzero(remaining >= total * 10 ** (-MTF_DYNAMIC_RANGE / 10))[-1]) + 1
    energy = energy[:end]

    times = np.arange(end) / sample_rate
    kernel = np.exp(-2j * np.pi * np.outer(MODULATION_FREQUENCIES, times))
    transfer = np.abs(kernel @ energy) / energy.sum()
    return np.clip(transfer / (1.0 + 10 ** (-snr / 10)), 0.0, 1.0)


@functools.lru_cache(maxsize=None)
def _delta_reference(sample_rate):
    """
    Band energies and modulation transfer of the filter bank's own response to a unit impulse.
    """
    bands = _band_signals([1.0], sample_rate)
    energies = np.sum(bands ** 2, axis=1)
    transfer = np.array([mtf(band, math.inf, sample_rate) for band in bands])
    return energies, transfer


def band_energies(h):
    """
    Per-band energy of a response relative to a unit impulse, so that a free path of 1 m gives 1 in
    every band.
    """
    reference, _ = _delta_reference(h.sample_rate)
    bands = _band_signals(h.samples, h.sample_rate)
    return BandSpectrum(np.sum(bands ** 2, axis=1) / reference)


def band_mean_square(samples, sample_rate):
    """
    Mean-square pressure (Pa^2) of a signal in each octave band.
    """
    samples = np.asarray(samples, dtype=float)
    bands = octave_filter(samples, sample_rate)
    return BandSpectrum(np.sum(bands ** 2, axis=1) / max(len(samples), 1))


def _masking_level(level):
    """
    Level (dB) of the masking slope from a band at `level` dB SPL into the band above it.
    """
    if level < 63:
        return 0.5 * level - 65
    if level < 67:
        return 1.8 * level - 146.9
    if level < 100:
        return 0.5 * level - 60
    return -10.0


def band_snr(signal_bands, noise_bands, speech_levels=None, masking=True, reception_threshold=True):
    """
    Signal-to-noise ratio per band: 10 log10(I_signal / (I_noise + I_masking + I_threshold)).

    Noise intensities are mean-square pressures (Pa^2). Without speech_levels the signal bands are
    intensities too, with the speech level already folded in (as for a convolved clip). With
    speech_levels (dB SPL at 1 m per band) the signal bands are band energies relative to a unit
    impulse, as returned by band_energies(), and are scaled by those levels.

    The masking intensity in band k is the intensity of signal plus noise in band k-1 lowered by a
    level-dependent slope. The threshold is the absolute speech reception threshold. A silent signal band
    returns -inf; a band with nothing in the denominator returns +inf.
    """
    signal_values = np.asarray(getattr(signal_bands, 'values', signal_bands), dtype=float)
    noise_values = np.asarray(getattr(noise_bands, 'values', noise_bands), dtype=float)
    if (signal_values < 0).any() or (noise_values < 0).any():
        raise ValueError("Band intensities must be nonnegative")
    if speech_levels is not None:
        signal_values = signal_values * level_to_intensity(getattr(speech_levels, 'values', speech_levels))

    disturbance = noise_values.copy()
    if masking:
        combined = signal_values + noise_values
        for k in range(1, len(OCTAVE_BANDS)):
            if combined[k - 1] > 0:
                level = float(intensity_to_level(combined[k - 1]))
                disturbance[k] += combined[k - 1] * 10 ** (_masking_level(level) / 10)
    if reception_threshold:
        disturbance += level_to_intensity(RECEPTION_THRESHOLD)

    snr = np.empty(len(OCTAVE_BANDS))
    for k, (s, d) in enumerate(zip(signal_values, disturbance)):
        if s <= 0:
            snr[k] = -math.inf
        elif d <= 0:
            snr[k] = math.inf
        else:
            snr[k] = 10 * math.log10(s / d)
    return BandSpectrum(snr, unit=BandUnitChoices.DB)


def sti_from_mtf(m, weighting=None):
    """
    Compute the Speech Transmission Index from a matrix of modulation transfer ratios.
    """
    weighting = weighting or get_config('sti_weighting')
    try:
        weights = STI_WEIGHTS[weighting]
    except KeyError:
        raise ValueError(f"Unknown STI weighting '{weighting}'")
    values = np.clip(getattr(m, 'values', m), 0.0, 1.0)

    with np.errstate(divide='ignore'):
        apparent = 10 * np.log10(values / (1.0 - values))
    apparent = np.clip(np.nan_to_num(apparent, nan=-APPARENT_SNR_LIMIT), -APPARENT_SNR_LIMIT, APPARENT_SNR_LIMIT)
    transmission = (apparent + APPARENT_SNR_LIMIT) / (2 * APPARENT_SNR_LIMIT)
    mti = transmission.mean(axis=1)

    alpha = np.array(weights['alpha']) / 1000
    beta = np.array(weights['beta']) / 1000
    index = float(alpha @ mti - beta @ np.sqrt(mti[:-1] * mti[1:]))
    index = min(max(index, 0.0), 1.0)
    return StiResult(sti=index, mti=mti, rating=sti_rating(index))


def sti(h, snr=None, weighting=None, compensate=None):
    """
    STI of an impulse response. `snr` is a BandSpectrum (dB) from band_snr(); without it the index
    reflects reverberation only.
    """
    logger = logging.getLogger('echoplace.intelligibility')

    if compensate is None:
        compensate = get_config('compensate_filter_mtf')
    snr_values = np.full(len(OCTAVE_BANDS), math.inf) if snr is None else np.asarray(snr.values)
    bands = _band_signals(h.samples, h.sample_rate)
    matrix = np.array([mtf(band, s, h.sample_rate) for band, s in zip(bands, snr_values)])
    if compensate:
        _, reference = _delta_reference(h.sample_rate)
        matrix = np.clip(np.divide(matrix, reference, out=np.zeros_like(matrix), where=reference > 0), 0.0, 1.0)

    result = sti_from_mtf(MtfMatrix(matrix), weighting)
    logger.debug(f"STI {result.sti:.4f} ({result.rating}) for {h!r}")
    return StiResult(sti=result.sti, mti=result.mti, rating=result.rating, snr=snr)


def sti_rating(value):
    """
    Map an STI value to its quality rating (A+ down to U).
    """
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"STI must lie in [0, 1] (got {value})")
    top_threshold, top_rating = STI_RATINGS[0]
    if value > top_threshold:
        return top_rating
    for threshold, rating in STI_RATINGS[1:]:
        if value >= threshold:
            return rating
    return STI_RATING_FLOOR


def empirical_t60(volume):
    """
    Reverberation time (s) predicted from room volume (m^3) by a quadratic fit.
    """
    if volume <= 0:
        raise ModelValidityError(f"Room volume must be positive (got {volume})")
    a, b, c = EMPIRICAL_T60_COEFFICIENTS
    t60 = a * volume ** 2 + b * volume + c
    if t60 <= 0:
        raise ModelValidityError(
            f"The empirical reverberation model does not hold for a volume of {volume:g} m^3 (T60 = {t60:.3f} s)"
        )
    return t60


def empirical_sti(t60):
    """
    STI predicted from reverberation time by logarithmic regression, clipped to [0, 1].
    """
    if t60 <= 0:
        raise ModelValidityError(f"Reverberation time must be positive (got {t60})")
    a, b = EMPIRICAL_STI_COEFFICIENTS
    value = a + b * math.log10(t60)
    if not 0.0 <= value <= 1.0:
        clipped = min(max(value, 0.0), 1.0)
        warnings.warn(f"Empirical STI {value:.4f} for T60 = {t60:g} s clipped to {clipped:g}")
        value = clipped
    return value


def read_noise_csv(path):
    """
    Read a `band_hz,level_db` CSV holding one level per octave band.
    """
    try:
        with open(path, newline='') as f:
            rows = list(csv.DictReader(f))
    except FileNotFoundError:
        raise ConfigNotFound(f"Noise spectrum '{path}' not found")

    levels = {}
    for row in rows:
        try:
            levels[int(float(row['band_hz']))] = float(row['level_db'])
        except (KeyError, TypeError, ValueError):
            raise ValueError(f"Malformed noise spectrum row in '{path}': {row}")
    missing = [fc for fc in OCTAVE_BANDS if fc not in levels]
    if missing:
        raise ValueError(f"Noise spectrum '{path}' has no level for bands {missing}")
    return BandSpectrum([levels[fc] for fc in OCTAVE_BANDS], unit=BandUnitChoices.DB)


def propagate_noise(scene, listener, responses=None):
    """
    Mean-square noise pressure (Pa^2) per band at a listener from every noise source in the scene, or
    None when the scene has no noise. `responses` may hold precomputed responses from each noise
    source to the listener.
    """
    if not scene.noise:
        return None
    if responses is None:
        responses = hybrid_rirs(scene, listener, [source.position for source in scene.noise])
    total = np.zeros(len(OCTAVE_BANDS))
    for source, h in zip(scene.noise, responses):
        total += level_to_intensity(source.spectrum) * band_energies(h).values
    return BandSpectrum(total)
