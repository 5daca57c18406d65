from dataclasses import dataclass, field

import numpy as np

from echoplace.choices import BandUnitChoices
from echoplace.constants import MODULATION_FREQUENCIES, OCTAVE_BANDS

__all__ = (
    'BandSpectrum',
    'EnergyHistogram',
    'ImpulseResponse',
    'MtfMatrix',
    'StiResult',
)


@dataclass(frozen=True, eq=False)
class BandSpectrum:
    """
    One value per octave band (125 Hz - 8 kHz).
    """
    values: np.ndarray
    unit: str = BandUnitChoices.ENERGY

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if len(values) != len(OCTAVE_BANDS):
            raise ValueError(f"A band spectrum needs {len(OCTAVE_BANDS)} values (got {len(values)})")
        if self.unit == BandUnitChoices.ENERGY and (values < 0).any():
            raise ValueError("Band energies must be nonnegative")
        object.__setattr__(self, 'values', values)

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, item):
        return self.values[item]

    def as_dict(self):
        return {str(fc): float(v) for fc, v in zip(OCTAVE_BANDS, self.values)}


@dataclass(frozen=True, eq=False)
class ImpulseResponse:
    """
    A pressure impulse response. Sample n corresponds to time t0 + n / sample_rate.
    """
    samples: np.ndarray
    sample_rate: int
    t0: float = 0.0
    provenance: str = ''

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float).reshape(-1)
        if not np.isfinite(samples).all():
            raise ValueError("Impulse response samples must be finite")
        object.__setattr__(self, 'samples', samples)

    def __len__(self):
        return len(self.samples)

    def __repr__(self):
        return f'<ImpulseResponse: {len(self)} samples @ {self.sample_rate} Hz ({self.provenance or "unknown"})>'

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate

    @property
    def energy(self):
        return float(np.sum(self.samples ** 2))

    def scaled(self, factor):
        return ImpulseResponse(self.samples * factor, self.sample_rate, self.t0, self.provenance)

    def padded(self, length):
        """
        Return a copy zero-padded (or truncated) to the given number of samples.
        """
        samples = np.zeros(length)
        count = min(length, len(self.samples))
        samples[:count] = self.samples[:count]
        return ImpulseResponse(samples, self.sample_rate, self.t0, self.provenance)


@dataclass(frozen=True, eq=False)
class EnergyHistogram:
    """
    Energy arriving at a receiver per octave band and time bin, as a fraction of the energy the source
    emits in that band. The `energy` array has shape (7, bins). Histograms gathered by a spherical
    detector carry its radius, from which pressure_scale converts energy fractions into squared pressure
    relative to a source producing unit pressure at 1 m.
    """
    bin_width: float
    energy: np.ndarray
    escaped_fraction: float = 0.0
    detector_radius: float = None

    @property
    def bins(self):
        return self.energy.shape[1]

    @property
    def duration(self):
        return self.bins * self.bin_width

    @property
    def band_totals(self):
        return self.energy.sum(axis=1)

    @property
    def pressure_scale(self):
        # A sphere of radius r at distance d intercepts r^2 / (4 d^2) of the emitted energy
        if self.detector_radius is None:
            return 1.0
        return 4.0 / self.detector_radius ** 2

    def bin_starts(self):
        return np.arange(self.bins) * self.bin_width


@dataclass(frozen=True, eq=False)
class MtfMatrix:
    """
    Modulation transfer ratios: one row per octave band, one column per modulation frequency.
    """
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        shape = (len(OCTAVE_BANDS), len(MODULATION_FREQUENCIES))
        if values.shape != shape:
            raise ValueError(f"An MTF matrix must have shape {shape} (got {values.shape})")
        object.__setattr__(self, 'values', values)


@dataclass(frozen=True, eq=False)
class StiResult:
    sti: float
    mti: np.ndarray
    rating: str
    snr: BandSpectrum = field(default=None)

    def as_dict(self):
        return {
            'sti': round(float(self.sti), 6),
            'rating': self.rating,
            'mti': {str(fc): round(float(v), 6) for fc, v in zip(OCTAVE_BANDS, self.mti)},
        }
