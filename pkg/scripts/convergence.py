"""Step-size self-convergence: N_a(t) at dt against dt/2 for the deterministic-given-seed methods.

    python3 scripts/convergence.py --config configs/desk.conf --time 0.1 --methods twa,hfb
"""
import argparse

from moldiss.config import load_config
from moldiss.ensemble import convergence_check


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/desk.conf")
    ap.add_argument("--time", type=float, default=0.1)
    ap.add_argument("--methods", default="twa,hfb")
    ap.add_argument("--trajectories", type=int, default=20)
    ap.add_argument("--tol", type=float, default=5e-3)
    a = ap.parse_args()
    for m in a.methods.split(","):
        cfg = load_config(a.config, [f"method={m}", f"t_final={a.time!r}"])
        n = 1 if m == "hfb" else a.trajectories
        cfg = cfg.replace(trajectories=n, batches=min(cfg.run.batches, n))
        rel, ok = convergence_check(cfg, a.time, a.tol, progress=True)
        print(f"{m}: |N_a(dt) / N_a(dt/2) - 1| = {rel:.2e} at t = {a.time} s ({'ok' if ok else 'too large'})")


if __name__ == "__main__":
    main()
