"""Frequency-integrated occupation for both bases across decoherence times."""
import argparse
import math

import numpy as np

from decoherent_fgr import analytic
from decoherent_fgr import experiments as ex
from decoherent_fgr.model import PropagationConfig


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--points", type=int, default=161)
    parser.add_argument("--hi", type=float, default=0.13, help="upper drive energy, eV")
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()
    print(f"Lorentzian area {analytic.lorentzian_area(ex.TLS_V, ex.TLS_ETA):.5e} eV")
    for basis, method in (("fixed", "fixed_numeric"), ("adiabatic", "adiabatic_numeric")):
        for tau in (10.0, 100.0, 1000.0, math.inf):
            width = (ex.TLS_ETA + (0.0 if math.isinf(tau) else 1 / tau)) * analytic.HBAR
            grid = tuple(ex.lorentzian_grid(ex.TLS_GAP, width, 0.001, args.hi, args.points))
            cfg = PropagationConfig(decoherence_time=tau, basis=basis, initial_frame=basis)
            r = ex.run_sweep(ex.SweepSpec("drive_energy", grid, ex.reference_tls(), cfg, (method,)),
                             threads=args.threads)
            raw = np.trapezoid(r.column(method), grid)
            try:
                note = f"{ex.sum_rule_integral(r, method):.5e}"
            except ex.TruncatedIntegralError as err:
                note = str(err)
            print(f"{basis:9} tau={tau:<6g} trapezoid {raw:.5e} eV  [{note}]")


if __name__ == "__main__":
    main()
