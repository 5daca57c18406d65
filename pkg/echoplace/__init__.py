import math

__version__ = '0.1.0'

default_settings = {
    # Crossover frequency (Hz) between the wave and geometric bands
    'crossover_hz': 500,

    # Highest frequency (Hz) resolved by the wave solver
    'wave_max_frequency': 500,

    # Grid points per wavelength at wave_max_frequency; values below 8 are accepted with a warning
    'points_per_wavelength': 8,

    # Refuse to build wave grids with more cells than this
    'max_cells': 20_000_000,

    # Length (s) of every synthesized impulse response
    'rir_duration': 1.0,

    # Number of rays traced per source/listener pair
    'rays': 50_000,

    # Rays traced together; each batch draws from its own seeded stream
    'ray_batch_size': 4096,

    # Maximum reflection order of the image-source early response
    'image_source_order': 2,

    # Width (s) of an energy histogram bin
    'bin_width': 0.001,

    # Image-source impulses replace the stochastic response before this time (s)
    'early_cutoff': 0.080,

    # Rays are dropped once their remaining energy falls below this fraction of the emitted energy
    'ray_energy_threshold': 1e-6,

    # Rays are dropped after travelling for this long (s)
    'max_ray_time': 3.0,

    # Warn when more than this fraction of rays leaves the mesh
    'leak_threshold': 0.05,

    # Listener candidate spacing (m)
    'listener_spacing': 0.1,

    # Source points drawn per source region
    'sources_per_region': 5,

    # Annealing schedule: a 0.03 STI worsening is accepted with probability 1/2 at the start
    # and 1/100 at the end
    'anneal_t0': 0.03 / math.log(2),
    'anneal_alpha': 0.95,
    'anneal_k_reject': 10,
    'anneal_t_end': 0.03 / math.log(100),

    # Band weighting used for STI: "male" or "female"
    'sti_weighting': 'male',

    # Divide out the octave filter's own modulation transfer
    'compensate_filter_mtf': True,

    # Propagation engine: "hybrid", "geometric" or "wave"
    'propagation': 'hybrid',

    # Worker threads; None reads ECHOPLACE_THREADS, falling back to the CPU count
    'threads': None,

    # Root seed for every random stream
    'seed': 0,
}
