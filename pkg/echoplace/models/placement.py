from dataclasses import dataclass, field

import numpy as np
from django.core.exceptions import ValidationError

from echoplace.conf import get_config

__all__ = (
    'AnnealParams',
    'AnnealResult',
    'AnnealingTrace',
    'CandidateSet',
    'RunReport',
    'SourceSamples',
    'TraceEntry',
)


@dataclass(frozen=True, eq=False)
class CandidateSet:
    """
    Discrete listener positions. A candidate's id is its index.
    """
    points: np.ndarray
    box_ids: np.ndarray
    spacing: float

    def __len__(self):
        return len(self.points)

    def __getitem__(self, item):
        return self.points[item]

    def nearest(self, point):
        """
        Return the id of the candidate nearest to the given point.
        """
        return int(np.argmin(np.linalg.norm(self.points - np.asarray(point, dtype=float), axis=1)))


@dataclass(frozen=True, eq=False)
class SourceSamples:
    """
    Discrete source positions with their weights. `spectra` holds a per-band level (dB SPL at 1 m) for
    each sample and `clips` an optional clip path; a sample with a clip ignores its spectrum.
    """
    positions: np.ndarray
    weights: np.ndarray
    regions: np.ndarray
    spectra: np.ndarray
    clips: tuple

    def __len__(self):
        return len(self.positions)

    def __add__(self, other):
        return SourceSamples(
            positions=np.concatenate([self.positions, other.positions]),
            weights=np.concatenate([self.weights, other.weights]),
            regions=np.concatenate([self.regions, other.regions]),
            spectra=np.concatenate([self.spectra, other.spectra]),
            clips=self.clips + other.clips,
        )


@dataclass(frozen=True)
class AnnealParams:
    t0: float
    alpha: float
    k_reject: int
    t_end: float
    seed: int = 0

    def __post_init__(self):
        self.clean()

    def clean(self):
        if not 0 < self.alpha < 1:
            raise ValidationError(f"Cooling rate must lie in (0, 1) (got {self.alpha})", code='alpha')
        if not 0 < self.t_end < self.t0:
            raise ValidationError(
                f"End temperature must be positive and below the start temperature (got {self.t_end} >= {self.t0})",
                code='t_end'
            )
        if self.k_reject < 1:
            raise ValidationError(f"k_reject must be at least 1 (got {self.k_reject})", code='k_reject')

    @classmethod
    def from_settings(cls, **kwargs):
        return cls(**{
            't0': get_config('anneal_t0'),
            'alpha': get_config('anneal_alpha'),
            'k_reject': get_config('anneal_k_reject'),
            't_end': get_config('anneal_t_end'),
            'seed': get_config('seed'),
            **kwargs,
        })

    @property
    def expected_iterations(self):
        return int(np.ceil(np.log(self.t_end / self.t0) / np.log(self.alpha)))


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    candidate_id: int
    q: float
    temperature: float
    accepted: bool
    best_q: float


@dataclass
class AnnealingTrace:
    entries: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def append(self, entry):
        self.entries.append(entry)

    @property
    def iterations(self):
        return max(0, len(self.entries) - 1)

    @property
    def best_so_far(self):
        return [entry.best_q for entry in self.entries]


@dataclass(frozen=True)
class AnnealResult:
    best_id: int
    best_q: float
    initial_id: int
    initial_q: float
    trace: AnnealingTrace


@dataclass
class RunReport:
    """
    The outcome of an optimization run.
    """
    scene_digest: str
    seed: int
    best_position: tuple
    best_objective: float
    initial_position: tuple
    initial_objective: float
    iterations: int
    per_source: list
    parameters: dict
    version: str
    noise_levels: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            'scene_digest': self.scene_digest,
            'seed': self.seed,
            'version': self.version,
            'best': {
                'position': list(self.best_position),
                'objective': self.best_objective,
            },
            'initial': {
                'position': list(self.initial_position),
                'objective': self.initial_objective,
            },
            'improvement': self.best_objective - self.initial_objective,
            'iterations': self.iterations,
            'per_source': self.per_source,
            'noise_levels_db': self.noise_levels,
            'parameters': self.parameters,
        }
