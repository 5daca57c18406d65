from django.db.models import TextChoices

__all__ = (
    'BandUnitChoices',
    'CellClassChoices',
    'PropagationChoices',
    'StiWeightingChoices',
    'ViolationCodeChoices',
)


class ViolationCodeChoices(TextChoices):
    PARSE_ERROR = 'ParseError', 'Parse error'
    MISSING_KEY = 'MissingKey', 'Missing key'
    MESH_NOT_FOUND = 'MeshNotFound', 'Mesh not found'
    DANGLING_MATERIAL = 'DanglingMaterial', 'Dangling material'
    COEFFICIENT_OUT_OF_RANGE = 'CoefficientOutOfRange', 'Coefficient out of range'
    BAD_SPECTRUM = 'BadSpectrum', 'Bad spectrum'
    EMPTY_AIR = 'EmptyAir', 'Empty air volume'
    DEGENERATE_BOX = 'DegenerateBox', 'Degenerate box'
    BOX_OUTSIDE_AIR = 'BoxOutsideAir', 'Box outside air'
    POINT_OUTSIDE_AIR = 'PointOutsideAir', 'Point outside air'
    NEGATIVE_WEIGHT = 'NegativeWeight', 'Negative weight'
    NO_POSITIVE_WEIGHT = 'NoPositiveWeight', 'No positive weight'
    CLIP_AND_SPECTRUM = 'ClipAndSpectrum', 'Clip and spectrum'
    SAMPLE_RATE_TOO_LOW = 'SampleRateTooLow', 'Sample rate too low'
    BAD_PHYSICS = 'BadPhysics', 'Bad physics setting'


class BandUnitChoices(TextChoices):
    ENERGY = 'energy', 'Energy'
    DB = 'dB', 'Decibels'
    COEFFICIENT = 'coefficient', 'Coefficient'


class CellClassChoices(TextChoices):
    AIR = 'air', 'Air'
    BOUNDARY = 'boundary', 'Boundary'
    SOLID = 'solid', 'Solid'


class PropagationChoices(TextChoices):
    HYBRID = 'hybrid', 'Hybrid'
    GEOMETRIC = 'geometric', 'Geometric only'
    WAVE = 'wave', 'Wave only'


class StiWeightingChoices(TextChoices):
    MALE = 'male', 'Male'
    FEMALE = 'female', 'Female'
