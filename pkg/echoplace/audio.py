import json
import logging
from fractions import Fraction
from pathlib import Path

import numpy as np
import soundfile as sf
from scipy import signal

from .exceptions import AudioError, ConfigNotFound
from .models import ImpulseResponse

__all__ = (
    'load_clip',
    'read_rir',
    'resample',
    'write_rir',
)


def resample(samples, source_rate, target_rate):
    """
    Polyphase resampling between two integer sample rates.
    """
    if source_rate == target_rate:
        return np.asarray(samples, dtype=float)
    ratio = Fraction(int(target_rate), int(source_rate))
    return signal.resample_poly(np.asarray(samples, dtype=float), ratio.numerator, ratio.denominator)


def load_clip(path, sample_rate):
    """
    Read a WAV clip as mono samples at the given rate. Samples are interpreted as sound pressure (Pa)
    one metre from the source.
    """
    logger = logging.getLogger('echoplace.audio')

    try:
        samples, rate = sf.read(path, dtype='float64', always_2d=True)
    except RuntimeError as e:
        raise AudioError(f"Unable to read clip '{path}': {e}")
    if not len(samples):
        raise AudioError(f"Clip '{path}' is empty")

    mono = samples.mean(axis=1)
    if rate != sample_rate:
        logger.debug(f"Resampling {path} from {rate} Hz to {sample_rate} Hz")
        mono = resample(mono, rate, sample_rate)
    return mono


def write_rir(path, ir):
    """
    Write an impulse response as a 32-bit float WAV with a JSON sidecar holding its time offset and
    provenance.
    """
    path = Path(path)
    sf.write(path, ir.samples.astype(np.float32), ir.sample_rate, subtype='FLOAT')
    sidecar = {
        't0': ir.t0,
        'sample_rate': ir.sample_rate,
        'provenance': ir.provenance,
    }
    path.with_suffix('.json').write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def read_rir(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigNotFound(f"Impulse response '{path}' not found")
    try:
        samples, rate = sf.read(path, dtype='float64', always_2d=True)
    except RuntimeError as e:
        raise AudioError(f"Unable to read impulse response '{path}': {e}")

    t0, provenance = 0.0, str(path)
    if (sidecar := path.with_suffix('.json')).exists():
        meta = json.loads(sidecar.read_text())
        t0 = float(meta.get('t0', 0.0))
        provenance = meta.get('provenance', provenance)
    return ImpulseResponse(samples[:, 0], rate, t0=t0, provenance=provenance)
