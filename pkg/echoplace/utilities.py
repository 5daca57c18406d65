import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager

import numpy as np

from .conf import get_config
from .contextvars import active_settings

__all__ = (
    'ListHandler',
    'activate_settings',
    'derive_seed',
    'parallel_map',
)


@contextmanager
def activate_settings(overrides):
    """
    A context manager for overriding echoplace settings. Nested activations layer on top of the
    overrides already active.
    """
    token = active_settings.set({**(active_settings.get() or {}), **(overrides or {})})

    try:
        yield
    finally:
        active_settings.reset(token)


def derive_seed(*values):
    """
    Derive a 64-bit seed from the given values. Floats and arrays are rounded to the micrometre so
    that the same position always yields the same seed.
    """
    parts = []
    for value in values:
        if isinstance(value, (np.ndarray, list, tuple)):
            parts.append(','.join(f'{float(v):.6f}' for v in np.ravel(value)))
        elif isinstance(value, float):
            parts.append(f'{value:.6f}')
        else:
            parts.append(str(value))
    digest = hashlib.sha256('|'.join(parts).encode()).digest()
    return int.from_bytes(digest[:8], 'little')


def parallel_map(func, items):
    """
    Apply func to every item using up to `threads` worker threads. Results keep the order of items.
    """
    items = list(items)
    threads = min(get_config('threads'), len(items))
    if threads <= 1:
        return [func(item) for item in items]

    # Settings overrides live in a ContextVar, which worker threads do not inherit
    overrides = active_settings.get()

    def call(item):
        with activate_settings(overrides):
            return func(item)

    with ThreadPoolExecutor(max_workers=threads, thread_name_prefix='echoplace') as executor:
        return list(executor.map(call, items))


class ListHandler(logging.Handler):
    """
    A logging handler which appends log messages to list passed on initialization.
    """
    def __init__(self, *args, queue, **kwargs):
        super().__init__(*args, **kwargs)
        self.queue = queue

    def emit(self, record):
        self.queue.append(self.format(record))
