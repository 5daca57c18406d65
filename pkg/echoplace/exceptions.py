__all__ = (
    'AudioError',
    'ConfigNotFound',
    'EchoplaceError',
    'EmptyCandidates',
    'GridError',
    'ModelValidityError',
    'SampleRateMismatch',
    'SampleRateTooLow',
    'SceneInvalid',
    'SolverInstability',
)


class EchoplaceError(Exception):
    """
    Base class for all errors raised by echoplace.
    """
    exit_code = 1


class ConfigNotFound(EchoplaceError):
    exit_code = 3


class SceneInvalid(EchoplaceError):
    """
    A scene document failed to parse or validate. `violations` holds one ValidationError per problem.
    """
    exit_code = 4

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__('; '.join(
            f'{v.code}: {v.message}' for v in self.violations
        ))


class GridError(EchoplaceError):
    exit_code = 5


class SolverInstability(EchoplaceError):
    exit_code = 5


class EmptyCandidates(EchoplaceError):
    exit_code = 6


class ModelValidityError(EchoplaceError):
    exit_code = 7


class AudioError(EchoplaceError):
    exit_code = 8


class SampleRateTooLow(AudioError):
    pass


class SampleRateMismatch(AudioError):
    pass
