"""Regenerate the CSV data behind the example figures into an output directory.

    python3 scripts/figure_data.py --out figures
"""

import argparse
from pathlib import Path

from sidar.cli import main

ROOT = Path(__file__).resolve().parents[1]
SYSTEMS = ROOT / "systems"


def runs(out: Path):
    s = lambda k: str(SYSTEMS / f"system{k}.json")  # noqa: E731
    yield out / "regions_s1", ["figure", "--kind", "regions", "--system", s(1), "--N-list", "2,3,5,10,25,50,100,200"]
    yield out / "regions_s2", ["figure", "--kind", "regions", "--system", s(2), "--N-list", "2,3,5,10,25,50,100,200"]
    yield out / "regions2d_s4", ["figure", "--kind", "regions2d", "--system", s(4), "--N-list", "3,4,10,25"]
    for k in (1, 2, 3):
        for x0 in ("0", "2"):
            yield (out / f"recursion_s{k}_x{x0}",
                   ["figure", "--kind", "recursion", "--system", s(k), "--x0", x0, "--N-list", "50,100,150,250"])
    N_list = ",".join(str(N) for N in range(2, 251))
    for k in (1, 2):
        for x0 in ("0", "2"):
            yield (out / f"lambda_sweep_s{k}_x{x0}",
                   ["figure", "--kind", "lambda_sweep", "--system", s(k), "--x0", x0, "--N-list", N_list])


def cli():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("figures"))
    args = ap.parse_args()
    for d, argv in runs(args.out):
        d.mkdir(parents=True, exist_ok=True)
        print(d.name, end=": ", flush=True)
        code = main(argv + ["--out", str(d)])
        if code:
            raise SystemExit(code)


if __name__ == "__main__":
    cli()
