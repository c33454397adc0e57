"""Compare every method at a single parameter point."""
import argparse
import math
import warnings

from decoherent_fgr import experiments as ex
from decoherent_fgr.model import PerturbativeValidityWarning, PropagationConfig


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--drive", type=float, default=ex.TLS_GAP, help="eV")
    parser.add_argument("--gap", type=float, default=ex.TLS_GAP, help="eV")
    parser.add_argument("--amplitude", type=float, default=ex.TLS_V, help="eV")
    parser.add_argument("--eta", type=float, default=ex.TLS_ETA, help="1/fs")
    parser.add_argument("--tau", type=float, default=math.inf, help="fs")
    args = parser.parse_args()
    warnings.simplefilter("ignore", PerturbativeValidityWarning)
    system = ex.reference_tls(args.drive, args.gap, args.amplitude, args.eta)
    for method in ex.METHODS:
        basis = ex.NUMERIC_METHODS.get(method, "fixed")
        cfg = PropagationConfig(decoherence_time=args.tau, basis=basis, initial_frame=basis)
        try:
            value, _ = ex.evaluate(method, system, cfg)
        except ValueError as err:
            print(f"{method:24} {err}")
            continue
        print(f"{method:24} {value:.6e}")


if __name__ == "__main__":
    main()
