"""Figure data for U = 0 and U = g0 comparisons, assembled in one directory.

    python3 scripts/reproduce_figures.py --config configs/desk.conf --out out/figures

Runs ``moldiss compare`` twice (without and with atom-atom scattering) and
copies fig1/fig3/fig5 from the first and fig2/fig4 from the second.
"""
import argparse
import shutil
import sys
from pathlib import Path

from moldiss.cli import main as cli
from moldiss.config import G0


def parse():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/desk.conf")
    ap.add_argument("--out", type=Path, default=Path("out/figures"))
    ap.add_argument("--methods", default="positive_p,twa,hfb")
    ap.add_argument("--set", dest="overrides", action="append", default=[])
    return ap.parse_args()


def main():
    a = parse()
    sets = [x for kv in a.overrides for x in ("--set", kv)]
    codes = {}
    for tag, u in (("u0", 0.0), ("g0", G0)):
        root = a.out / tag
        codes[tag] = cli(["compare", "--config", a.config, "--methods", a.methods, *sets,
                          "--set", f"u_aa={u!r}", "--set", f"output_dir={root}"])
        if codes[tag] == 2:
            return 2
    for name, tag in (("fig1.dat", "u0"), ("fig3.dat", "u0"), ("fig5.dat", "u0"),
                      ("fig2.dat", "g0"), ("fig4.dat", "g0")):
        shutil.copy(a.out / tag / name, a.out / name)
    print(f"figure data in {a.out}; exit codes {codes}")
    return max(codes.values())


if __name__ == "__main__":
    sys.exit(main())
