'''
@description:
- Command-line interface of ``deep-eprop``: one subcommand per driver
  (verify, train, bench, paths) sharing the output, seed and logging flags.
'''

import argparse

ALGORITHMS = ['bptt', 'rtrl', 'deep_rtrl', 'eprop', 'deep_eprop', 'path_sum']
TRACE_MODES = ['diag_home_dense_above', 'diag_everywhere']
TASKS = ['temporal_xor', 'delayed_copy', 'pattern_sum']


def int_list(text: str) -> list:
    '''Parse ``"4,8,16"`` into ``[4, 8, 16]``.'''
    try:
        values = [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def name_list(text: str) -> list:
    names = [part.strip() for part in text.split(',') if part.strip()]
    unknown = [name for name in names if name not in ALGORITHMS]
    if unknown or not names:
        raise argparse.ArgumentTypeError(f"unknown algorithm(s) {unknown}; choose from {ALGORITHMS}")
    return names


def _common(parser: argparse.ArgumentParser, spec: str = None) -> None:
    if spec is not None:
        parser.add_argument('--spec', required=spec == 'required', help='Path to the JSON network spec')
    parser.add_argument('--out', required=True, help='Output directory; every artifact is written under it')
    parser.add_argument('--seed', type=int, help='Seed for parameters and data (default: the spec seed, or 0)')
    parser.add_argument(
        '--log-type',
        choices=['none', 'console', 'file', 'both'],
        default='console',
        help='Logging output: none (no logging), console, file, or both'
    )
    parser.add_argument(
        '--log-file',
        default=None,
        help='Path to the log file (used if --log-type is file or both). Default: <out>/deep_eprop.log'
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='deep-eprop',
        description='Exact and approximate forward-mode gradients for deep recurrent networks.'
    )
    sub = parser.add_subparsers(dest='command', required=True)

    verify = sub.add_parser('verify', help='Cross-check every gradient engine against the oracles')
    _common(verify, spec='optional')
    verify.add_argument('--trace-mode', choices=TRACE_MODES, help='Override the spec trace mode')
    verify.add_argument('--tolerance', type=float, help='Use this bound for every comparison instead of the defaults')
    verify.add_argument('--steps', type=int, default=5, help='Sequence length used on the given spec (default 5)')
    verify.add_argument('--quick', action='store_true', help='Run the battery on fewer instances')
    verify.add_argument('--checkpoint', help='Start the spec checks from these saved parameters')

    train = sub.add_parser('train', help='Train on a synthetic task and write per-episode metrics')
    _common(train, spec='required')
    train.add_argument('--algorithm', choices=ALGORITHMS, default='deep_eprop', help='Gradient algorithm')
    train.add_argument('--trace-mode', choices=TRACE_MODES, help='Override the spec trace mode')
    train.add_argument('--task', choices=TASKS, default='temporal_xor', help='Synthetic task')
    train.add_argument('--task-length', type=int, default=10, help='Timesteps per episode')
    train.add_argument('--task-pool', type=int,
                       help='Cycle through this many task instances instead of drawing a fresh one per episode')
    train.add_argument('--delay', type=int, default=0, help='Delay of the delayed_copy task')
    train.add_argument('--episodes', type=int, default=100, help='Number of episodes')
    train.add_argument('--learning-rate', type=float, default=0.1, help='Gradient descent step size (>= 0)')
    train.add_argument('--update-timing', choices=['episode_end', 'online'], default='episode_end',
                       help='Apply updates after each episode or after each step')
    train.add_argument('--compare-bptt', action='store_true',
                       help='Record cosine and relative error against BPTT every episode')
    train.add_argument('--log-every', type=int, default=100, help='Log mean loss every N episodes')
    train.add_argument('--checkpoint', help='Start from these saved parameters')

    bench = sub.add_parser('bench', help='Count work and storage across H, L and T')
    _common(bench, spec='optional')
    bench.add_argument('--algorithms', type=name_list, default=['bptt', 'rtrl', 'deep_rtrl', 'eprop', 'deep_eprop'],
                       help='Comma-separated algorithms')
    bench.add_argument('--hidden', type=int_list, default=[4, 8, 16], help='Comma-separated widths H')
    bench.add_argument('--depth', type=int_list, default=[1], help='Comma-separated depths L')
    bench.add_argument('--length', type=int_list, default=[8], help='Comma-separated sequence lengths T')
    bench.add_argument('--parallel', action='store_true', help='Run points in parallel (wall time suppressed)')
    bench.add_argument('--no-timing', action='store_true', help='Leave wall time out of the CSV')

    paths = sub.add_parser('paths', help='List every gradient path of a short episode')
    _common(paths, spec='required')
    paths.add_argument('--steps', type=int, default=3, help='Sequence length (default 3)')

    return parser


def parse_args(argv=None) -> argparse.Namespace:
    '''
    **Purpose:**
    - Parse command-line arguments for ``deep-eprop``.

    **Returns:**
    - ``argparse.Namespace``: The parsed command-line arguments.

    **Example:**
    ```python
    >>> args = parse_args(["paths", "--spec", "chain.json", "--out", "run"])
    >>> print(args.command, args.steps)
    ```
    Example Output:
    - paths 3

    **Raises:**
    - ``SystemExit``: If the required arguments are not provided or if the arguments are invalid (code 2)
    '''

    return build_parser().parse_args(argv)
