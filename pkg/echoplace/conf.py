import os

from django.conf import settings
from django.core.exceptions import ImproperlyConfigured

from . import default_settings
from .constants import THREADS_ENV
from .contextvars import active_settings

__all__ = (
    'configure_settings',
    'get_config',
)


def configure_settings():
    """
    Configure Django settings with an empty ECHOPLACE dict if nothing else has configured them.
    """
    if not settings.configured and not os.environ.get('DJANGO_SETTINGS_MODULE'):
        settings.configure(ECHOPLACE={})


def get_config(name):
    """
    Return the value of an echoplace setting. Overrides activated with activate_settings() take
    precedence over settings.ECHOPLACE, which takes precedence over the package defaults.
    """
    configure_settings()

    if name not in default_settings:
        raise ImproperlyConfigured(f"echoplace: unknown setting '{name}'")

    overrides = active_settings.get()
    if overrides is not None and name in overrides:
        value = overrides[name]
    else:
        value = getattr(settings, 'ECHOPLACE', {}).get(name, default_settings[name])

    if name == 'threads':
        return _resolve_threads(value)
    return value


def _resolve_threads(value):
    if value is None:
        value = os.environ.get(THREADS_ENV) or os.cpu_count() or 1
    try:
        threads = int(value)
    except (TypeError, ValueError):
        raise ImproperlyConfigured(f"echoplace: threads must be an integer (got {value!r})")
    if threads < 1:
        raise ImproperlyConfigured(f"echoplace: threads must be positive (got {threads})")
    return threads
