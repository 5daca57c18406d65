from django.dispatch import Signal

__all__ = (
    'objective_evaluated',
    'post_anneal',
    'post_trace',
    'post_wave_run',
    'pre_anneal',
    'pre_trace',
    'pre_wave_run',
)

# Pre-event signals
pre_wave_run = Signal()
pre_trace = Signal()
pre_anneal = Signal()

# Post-event signals
post_wave_run = Signal()
post_trace = Signal()
post_anneal = Signal()

# Sent once per uncached objective evaluation
objective_evaluated = Signal()
