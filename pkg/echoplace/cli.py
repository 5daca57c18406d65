"""
The `echoplace` command: optimize, field-map, sti, baseline and validate.
"""
import argparse
import logging
import sys

from django.core.exceptions import ValidationError

from echoplace import __version__
from echoplace.conf import configure_settings, get_config
from echoplace.constants import DEFAULT_SOURCE_LEVEL
from echoplace.exceptions import EchoplaceError
from echoplace.jobs import BaselineJob, FieldMapJob, OptimizeJob, StiJob, ValidateJob
from echoplace.scene import load_scene_file
from echoplace.utilities import activate_settings

__all__ = (
    'build_parser',
    'main',
)

EXIT_USAGE = 2

# CLI flag -> setting overridden by it
SETTING_FLAGS = {
    'seed': 'seed',
    'spacing': 'listener_spacing',
    'rays': 'rays',
    't0': 'anneal_t0',
    'alpha': 'anneal_alpha',
    'k_reject': 'anneal_k_reject',
    'crossover_hz': 'crossover_hz',
}


def point(value):
    try:
        coordinates = tuple(float(v) for v in value.split(','))
    except ValueError:
        raise argparse.ArgumentTypeError(f"'{value}' is not a point (expected x,y,z)")
    if len(coordinates) != 3:
        raise argparse.ArgumentTypeError(f"'{value}' is not a point (expected x,y,z)")
    return coordinates


def pair(value):
    try:
        source, listener = value.split('/')
    except ValueError:
        raise argparse.ArgumentTypeError(f"'{value}' is not a pair (expected x,y,z/x,y,z)")
    return point(source), point(listener)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help="Scene config (JSON)")
    common.add_argument('--seed', type=int, help="Root seed for every random stream")
    common.add_argument('--out', help="Output directory")
    common.add_argument('--spacing', type=float, help="Listener candidate spacing (m)")
    common.add_argument('--rays', type=int, help="Rays per source/listener pair")
    common.add_argument('--t0', type=float, help="Initial annealing temperature")
    common.add_argument('--alpha', type=float, help="Cooling rate")
    common.add_argument('--k-reject', type=int, help="Stop after this many consecutive rejections")
    common.add_argument('--crossover-hz', type=float, help="Crossover frequency between the wave and geometric bands")
    common.add_argument('-v', '--verbose', action='store_true', help="Log progress to stderr")

    parser = argparse.ArgumentParser(
        prog='echoplace',
        description="Place a receiver where speech is most intelligible.",
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    commands = parser.add_subparsers(dest='command', required=True)

    optimize = commands.add_parser('optimize', parents=[common], help="Optimize the receiver position")
    optimize.add_argument('--start', type=point, help="Start from the candidate nearest this x,y,z")
    optimize.set_defaults(handler=cmd_optimize)

    field_map = commands.add_parser('field-map', parents=[common], help="Evaluate the objective on a grid")
    field_map.set_defaults(handler=cmd_field_map)

    sti = commands.add_parser('sti', parents=[common], help="STI of an impulse response")
    sti.add_argument('rir', help="Impulse response (WAV)")
    sti.add_argument('--noise', help="Noise spectrum CSV (band_hz,level_db) at the listener")
    sti.add_argument(
        '--speech-level', type=float, default=DEFAULT_SOURCE_LEVEL, help="Speech level per band (dB SPL at 1 m)"
    )
    sti.set_defaults(handler=cmd_sti)

    baseline = commands.add_parser('baseline', parents=[common], help="Empirical T60 and STI estimates")
    baseline.add_argument('--volume', type=float, help="Room volume (m^3)")
    baseline.add_argument('--t60', type=float, help="Reverberation time (s); skips the volume model")
    baseline.add_argument(
        '--pair', type=pair, action='append', default=[], help="Source/listener pair x,y,z/x,y,z (repeatable)"
    )
    baseline.set_defaults(handler=cmd_baseline)

    validate = commands.add_parser('validate', parents=[common], help="Check a scene config")
    validate.set_defaults(handler=cmd_validate)

    return parser


def overrides_from_args(args):
    return {
        setting: getattr(args, flag) for flag, setting in SETTING_FLAGS.items() if getattr(args, flag, None) is not None
    }


def require_config(args, parser):
    if not args.config:
        parser.error(f"{args.command} needs --config")
    return load_scene_file(args.config)


def cmd_optimize(args, parser):
    scene = require_config(args, parser)
    with activate_settings({**scene.settings, **overrides_from_args(args)}):
        report, _ = OptimizeJob(args.out).start(scene, get_config('seed'), start_at=args.start)
    print(f"best position: {', '.join(f'{v:.3f}' for v in report.best_position)}")
    print(f"objective: {report.initial_objective:.4f} -> {report.best_objective:.4f}")
    return 0


def cmd_field_map(args, parser):
    scene = require_config(args, parser)
    with activate_settings({**scene.settings, **overrides_from_args(args)}):
        rows = FieldMapJob(args.out).start(scene, get_config('seed'), spacing=args.spacing)
    values = [row[-1] for row in rows]
    print(f"{len(rows)} points, objective {min(values):.4f} .. {max(values):.4f}")
    return 0


def cmd_sti(args, parser):
    with activate_settings(overrides_from_args(args)):
        result = StiJob(args.out).start(args.rir, noise=args.noise, speech_level=args.speech_level)
    print(f"STI: {result.sti:.4f}")
    print(f"rating: {result.rating}")
    for band, mti in result.as_dict()['mti'].items():
        print(f"  MTI {band:>5} Hz: {mti:.4f}")
    return 0


def cmd_baseline(args, parser):
    scene = None
    if args.config:
        scene = load_scene_file(args.config)
    elif args.volume is None and args.t60 is None:
        parser.error("baseline needs --volume, --t60 or --config")
    if args.pair and scene is None:
        parser.error("--pair needs --config")

    settings = {**(scene.settings if scene else {}), **overrides_from_args(args)}
    with activate_settings(settings):
        result = BaselineJob(args.out).start(volume=args.volume, t60=args.t60, scene=scene, pairs=args.pair)

    if result['volume'] is not None:
        print(f"volume: {result['volume']:.2f} m^3")
    print(f"T60: {result['t60']:.3f} s")
    print(f"STI: {result['sti']:.3f}")
    if result['pairs']:
        print(f"{'pair':<6}{'hybrid':>10}{'geometric':>12}{'empirical':>12}")
        for row in result['pairs']:
            print(f"{row['pair']:<6}{row['hybrid']:>10.4f}{row['geometric']:>12.4f}{row['empirical']:>12.4f}")
    return 0


def cmd_validate(args, parser):
    if not args.config:
        parser.error("validate needs --config")
    violations = ValidateJob(args.out).start(args.config)
    for v in violations:
        print(f"{v.code}: {v.message}")
    if violations:
        return 4
    print(f"{args.config}: valid")
    return 0


def main(argv=None):
    configure_settings()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code

    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format='%(levelname)s %(name)s: %(message)s',
    )

    try:
        return args.handler(args, parser)
    except SystemExit as e:
        return e.code
    except EchoplaceError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except (ValidationError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        print(f"unexpected error: {e!r}", file=sys.stderr)
        return 1
