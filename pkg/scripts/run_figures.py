"""Regenerate the bundled replication sweeps as CSV, JSON and SVG."""
import argparse
import time

from decoherent_fgr import experiments as ex
from decoherent_fgr.io import emit, sweep_echo


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("figures", nargs="*", default=list(ex.FIGURES), choices=ex.FIGURES)
    parser.add_argument("--points", type=int, default=None, help="grid size override")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--out", default="results")
    args = parser.parse_args()
    for name in args.figures:
        start = time.perf_counter()
        result = ex.figure(name, threads=args.threads, points=args.points)
        paths = emit(result, ("csv", "json", "svg"), args.out,
                     echo=sweep_echo(result, {"figure": name}), stem=f"fig{name}")
        print(f"fig {name}: {len(result.rows)} points in {time.perf_counter() - start:.1f} s")
        for p in paths:
            print(f"  {p}")


if __name__ == "__main__":
    main()
