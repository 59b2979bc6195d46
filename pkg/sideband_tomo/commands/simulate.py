import logging
from pathlib import Path

from sideband_tomo.commands import CommandError
from sideband_tomo.config import settings
from sideband_tomo.services import scan_io

logger = logging.getLogger(__name__)


def register(sub) -> None:
    p = sub.add_parser("simulate", help="synthesize HD/RD scans from an experiment config")
    p.add_argument("--config", default=None, help="experiment config JSON (default: $SIDEBAND_TOMO_CONFIG, then built-in)")
    p.add_argument("--out", required=True, help="output directory for scan CSV files")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--sigma", type=float, default=None, help="override the noise sigma (SQL units)")
    p.add_argument("--write-config", default=None, help="also write the resolved config here")
    p.set_defaults(handler=run)


def resolve_config(path: str | None):
    path = path or settings.SIDEBAND_TOMO_CONFIG
    if path:
        logger.info("Loading experiment config %s", path)
        return scan_io.load_config(path)
    return scan_io.default_config()


def run(args) -> int:
    config = resolve_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.sigma is not None:
        overrides["noise_sigma"] = args.sigma
    if overrides:
        config = config.model_validate({**config.model_dump(by_alias=True), **overrides})
    try:
        datasets = scan_io.expand_config(config)
    except ValueError as e:
        if e.args[0] == "unphysical_ground_truth":
            report = e.args[1]
            raise CommandError(
                2,
                "ground truth is unphysical: min symplectic eigenvalue "
                f"{report['min_symplectic_eigenvalue']:.6g}, spectrum {report['symplectic_eigenvalues']}",
            )
        if e.args[0] == "fixture_beams_mismatch":
            raise CommandError(2, f"beams {e.args[1]} are not in the fixture; give a ground_truth")
        raise
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for key, data in datasets.items():
        path = out / f"{key}.csv"
        scan_io.write_scan(path, data)
        print(path)
    if args.write_config:
        scan_io.write_config(args.write_config, config)
    return 0
