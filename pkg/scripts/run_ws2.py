"""Occupation versus decoherence time for the three strain presets."""
import argparse
import warnings

import numpy as np

from decoherent_fgr import experiments as ex
from decoherent_fgr.io import emit, sweep_echo
from decoherent_fgr.model import PerturbativeValidityWarning


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--points", type=int, default=25)
    parser.add_argument("--eta", type=float, default=ex.TLS_ETA, help="stimulus damping, 1/fs")
    parser.add_argument("--initial-frame", choices=("fixed", "adiabatic"), default="fixed")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--out", default="results")
    args = parser.parse_args()
    warnings.simplefilter("ignore", PerturbativeValidityWarning)
    taus = ex.default_tau_grid(args.points)
    print(f"{'tau_fs':>10}" + "".join(f"{p:>14}" for p in ex.WS2_GAPS))
    curves = {}
    for preset in ex.WS2_GAPS:
        result = ex.ws2_scenario(preset, taus, eta=args.eta, initial_frame=args.initial_frame,
                                 threads=args.threads)
        curves[preset] = result.column("adiabatic_numeric")
        emit(result, ("csv", "json", "svg"), args.out,
             echo=sweep_echo(result, {"preset": preset, "initial_frame": args.initial_frame}),
             stem=f"ws2-{preset}")
    for i, tau in enumerate(taus):
        print(f"{tau:10.3g}" + "".join(f"{curves[p][i]:14.5f}" for p in ex.WS2_GAPS))
    for preset, y in curves.items():
        print(f"{preset}: sharpness {ex.sharpness(y):.2f}, argmax tau {taus[int(np.argmax(y))]:.3g} fs")


if __name__ == "__main__":
    main()
