from contextvars import ContextVar

__all__ = (
    'active_settings',
)


active_settings = ContextVar('active_settings', default=None)
