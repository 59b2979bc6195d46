import logging
import sys

import numpy as np

from sideband_tomo.commands import CommandError
from sideband_tomo.schemas import CavityParams
from sideband_tomo.services.cavity_response import coefficient_curves, detuning_grid

logger = logging.getLogger(__name__)


def register(sub) -> None:
    p = sub.add_parser("coeffs", help="RD noise coefficients against detuning, as CSV")
    p.add_argument("--d", type=float, default=0.9, help="impedance matching parameter")
    p.add_argument("--omega-ratio", type=float, default=5.0, help="analysis frequency over cavity bandwidth")
    p.add_argument("--dmin", type=float, default=-10.0)
    p.add_argument("--dmax", type=float, default=10.0)
    p.add_argument("--count", type=int, default=401)
    p.add_argument("--compare-d", type=float, default=None, help="also report max |c_delta| at this d")
    p.add_argument("--out", default=None, help="output CSV (default: stdout)")
    p.set_defaults(handler=run)


def _max_c_delta(d: float, omega_ratio: float, grid) -> float:
    frame = coefficient_curves(CavityParams(d=d, omega_ratio=omega_ratio), grid)
    return float(np.max(np.abs(frame["c_delta"])))


def run(args) -> int:
    if args.count < 2 or args.dmax <= args.dmin:
        raise CommandError(1, f"invalid detuning range [{args.dmin}, {args.dmax}] with {args.count} points")
    params = CavityParams(d=args.d, omega_ratio=args.omega_ratio)
    grid = detuning_grid(args.dmin, args.dmax, args.count, args.d)
    frame = coefficient_curves(params, grid)
    frame.to_csv(args.out if args.out else sys.stdout, index=False, float_format="%.17g")
    peak = float(np.max(np.abs(frame["c_delta"])))
    print(f"max |c_delta| at d={args.d:g}: {peak:.6g}", file=sys.stderr)
    if args.compare_d is not None:
        other = _max_c_delta(
            args.compare_d, args.omega_ratio, detuning_grid(args.dmin, args.dmax, args.count, args.compare_d)
        )
        print(f"max |c_delta| at d={args.compare_d:g}: {other:.6g}", file=sys.stderr)
    if args.out:
        logger.info("Wrote %d coefficient rows to %s", len(frame), args.out)
    return 0
