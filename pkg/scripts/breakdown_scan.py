"""Positive-P breakdown time as a function of the atom-atom coupling.

    python3 scripts/breakdown_scan.py --config configs/desk.conf --multiples 0,1,4,32
"""
import argparse

from moldiss.config import G0, load_config
from moldiss.ensemble import TotalDivergence, detect_tmax, run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/desk.conf")
    ap.add_argument("--multiples", default="0,1,32", help="u_aa in units of g0")
    ap.add_argument("--t-final", type=float, default=0.25)
    ap.add_argument("--trajectories", type=int, default=1000)
    a = ap.parse_args()
    print("u_aa/g0  t_max[s]  diverged_frac(final)")
    for mult in (float(x) for x in a.multiples.split(",")):
        cfg = load_config(a.config, [
            "method=positive_p", f"u_aa={mult * G0!r}", f"t_final={a.t_final!r}",
            f"trajectories={a.trajectories}",
        ])
        try:
            s = run(cfg)
        except TotalDivergence as exc:
            s = exc.series
        print(f"{mult:7g}  {detect_tmax(s)!s:>8}  {s.diverged_frac[-1]:.3f}")


if __name__ == "__main__":
    main()
