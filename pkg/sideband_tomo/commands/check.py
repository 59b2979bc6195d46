import sys

import numpy as np

from sideband_tomo.schemas import StationaryBeamMoments
from sideband_tomo.services import scan_io
from sideband_tomo.services.detection_models import stationarity_residual
from sideband_tomo.services.modal_algebra import (
    build_stationary_covariance,
    check_physicality,
    decompose_multibeam,
    duan_witness,
    hd_noise_bounds,
    pair_duan_noise,
    read_matrix,
    spectral_from_multibeam,
)


def register(sub) -> None:
    p = sub.add_parser("check", help="physicality and entanglement report")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--matrix", help="covariance CSV, or 'fixture' for the embedded six-mode matrix")
    group.add_argument("--moments", help="single beam alpha,beta,gamma,delta")
    p.set_defaults(handler=run)


def _parse_moments(text: str) -> StationaryBeamMoments:
    parts = [x.strip() for x in text.split(",")]
    if len(parts) != 4:
        raise ValueError("malformed_moments", text)
    return StationaryBeamMoments(alpha=parts[0], beta=parts[1], gamma=parts[2], delta=parts[3])


def run(args) -> int:
    lines = []
    if args.moments:
        V = build_stationary_covariance(_parse_moments(args.moments))
        lines.append("source: moments")
    elif args.matrix == "fixture":
        fixture, V = scan_io.load_fixture()
        S = fixture.spectral().matrix
        lines.append("source: six-mode fixture")
        lines.append(f"hermitian: pass (max deviation {np.max(np.abs(S - S.conj().T)):.3g})")
        lines.append(
            f"quoted uncertainty: delta entries +-{fixture.delta_uncertainty:g}, cross entries +-{fixture.cross_uncertainty:g}"
        )
    else:
        V = read_matrix(args.matrix)
        lines.append(f"source: {args.matrix} ({V.basis.value}, {V.dim}x{V.dim})")

    report = check_physicality(V)
    lines.append(f"physical: {'pass' if report.passed else 'FAIL'}")
    lines.append(f"min symplectic eigenvalue: {report.min_symplectic_eigenvalue:.6g}")
    lines.append("symplectic eigenvalues: " + " ".join(f"{x:.6g}" for x in report.symplectic_eigenvalues))

    if V.dim % 4 == 0:
        lines.append(f"stationarity residual: {stationarity_residual(V):.3g}")
        beams, crosses = decompose_multibeam(V)
        names = list(beams)
        for name, m in beams.items():
            lowest, _ = hd_noise_bounds(m)
            witness = duan_witness(max(lowest, 0.0))
            lines.append(
                f"beam {name}: min HD noise {lowest:.6g} -> sideband entanglement {'yes' if witness.entangled_sidebands else 'no'}"
            )
        S = spectral_from_multibeam(beams, crosses)
        for i in range(len(names)):
            for j in range(i + 1, len(names)):
                first, second = pair_duan_noise(S, i, j)
                verdict = any(duan_witness(max(x, 0.0)).entangled_sidebands for x in (first, second))
                lines.append(
                    f"pair {names[i]}-{names[j]}: Duan sums {first:.6g}, {second:.6g} -> entangled {'yes' if verdict else 'no'}"
                )
    sys.stdout.write("\n".join(lines) + "\n")
    return 0
