import math

from django.core.exceptions import ImproperlyConfigured

# Octave band centre frequencies (Hz)
OCTAVE_BANDS = (125, 250, 500, 1000, 2000, 4000, 8000)

# Upper edge of the highest octave band (Hz)
UPPER_BAND_EDGE = OCTAVE_BANDS[-1] * math.sqrt(2)

# Modulation frequencies (Hz) of the modulation transfer function
MODULATION_FREQUENCIES = (0.63, 0.8, 1.0, 1.25, 1.6, 2.0, 2.5, 3.15, 4.0, 5.0, 6.3, 8.0, 10.0, 12.5)

# Reference sound pressure (Pa)
REFERENCE_PRESSURE = 20e-6

# Scene defaults
SPEED_OF_SOUND = 343.0
SAMPLE_RATE = 32000

# Per-band level (dB SPL at 1 m) of a source region without a clip or spectrum
DEFAULT_SOURCE_LEVEL = 60.0

# Geometric paths shorter than this (m) are treated as this long
MIN_PATH_LENGTH = 0.1

# Band weighting factors in thousandths. alpha has one entry per band, beta one per adjacent band pair.
STI_WEIGHTS = {
    'male': {
        'alpha': (85, 127, 230, 233, 309, 224, 173),
        'beta': (85, 78, 65, 11, 47, 95),
    },
    'female': {
        'alpha': (0, 117, 223, 216, 328, 250, 194),
        'beta': (0, 99, 66, 62, 25, 76),
    },
}

# Absolute speech reception threshold per band (dB SPL)
RECEPTION_THRESHOLD = (46.0, 27.0, 12.0, 6.5, 7.5, 8.0, 12.0)

# Apparent SNR is clipped to +/- this many dB
APPARENT_SNR_LIMIT = 15.0

# Just-noticeable STI difference
STI_JND = 0.03

# Quality ratings: (lower bound, rating), highest first. Anything at or below the last bound is "U".
STI_RATINGS = (
    (0.76, 'A+'),
    (0.72, 'A'),
    (0.68, 'B'),
    (0.64, 'C'),
    (0.60, 'D'),
    (0.56, 'E'),
    (0.52, 'F'),
    (0.48, 'G'),
    (0.44, 'H'),
    (0.40, 'I'),
    (0.36, 'J'),
)
STI_RATING_FLOOR = 'U'

# Empirical reverberation model T60 = a*V^2 + b*V + c
EMPIRICAL_T60_COEFFICIENTS = (-2e-5, 0.0048, 0.255)

# Empirical intelligibility model STI = a + b*log10(T60)
EMPIRICAL_STI_COEFFICIENTS = (0.5895, -0.4422)

# Starter material presets: absorption per octave band and a scalar scattering coefficient
MATERIAL_PRESETS = {
    'rigid': {
        'absorption': (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
        'scattering': 0.0,
    },
    'anechoic': {
        'absorption': (1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0),
        'scattering': 0.0,
    },
    'concrete': {
        'absorption': (0.01, 0.01, 0.02, 0.02, 0.02, 0.03, 0.03),
        'scattering': 0.05,
    },
    'brick': {
        'absorption': (0.03, 0.03, 0.03, 0.04, 0.05, 0.07, 0.07),
        'scattering': 0.1,
    },
    'gypsum_board': {
        'absorption': (0.29, 0.10, 0.05, 0.04, 0.07, 0.09, 0.09),
        'scattering': 0.05,
    },
    'glass': {
        'absorption': (0.35, 0.25, 0.18, 0.12, 0.07, 0.04, 0.04),
        'scattering': 0.02,
    },
    'wood_floor': {
        'absorption': (0.15, 0.11, 0.10, 0.07, 0.06, 0.07, 0.07),
        'scattering': 0.1,
    },
    'carpet': {
        'absorption': (0.02, 0.06, 0.14, 0.37, 0.60, 0.65, 0.65),
        'scattering': 0.2,
    },
    'curtain': {
        'absorption': (0.07, 0.31, 0.49, 0.75, 0.70, 0.60, 0.60),
        'scattering': 0.3,
    },
    'acoustic_tile': {
        'absorption': (0.50, 0.70, 0.60, 0.70, 0.70, 0.50, 0.50),
        'scattering': 0.2,
    },
}

# Environment variable capping worker threads
THREADS_ENV = 'ECHOPLACE_THREADS'

# Magic bytes of a wave field snapshot
SNAPSHOT_MAGIC = b'ECHOFDTD'


for _name, _weights in STI_WEIGHTS.items():
    if sum(_weights['alpha']) - sum(_weights['beta']) != 1000:
        raise ImproperlyConfigured(f"echoplace: {_name} STI weights must satisfy sum(alpha) - sum(beta) = 1")
