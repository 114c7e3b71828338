#!/usr/bin/env python3
"""
Recover the temporal offset between two recordings of the same stimulus.

Two movies share a square-wave bump stimulus, but movie B starts a few
frames late.  Frame-by-frame spatial correlation, averaged over the
overlap at each candidate lag, peaks at the true offset.  The demo
prints the correlation profile as a bar chart and repeats the recovery
over a sweep of planted lags.
"""

import numpy as np

from lasr import PhantomSpec, StimSpec, gen_lagged_pair, icr_lag

# -------------------------- Config --------------------------
BASE = PhantomSpec(n_frames=400, stim=StimSpec(period=20), seed=12)
PLANTED_LAG = 7
M0 = 10          # settling frames dropped from the front of each movie
MAX_LAG = 20


def bar(x, lo, hi, width=44):
    """A left-anchored text bar for x in [lo, hi]."""
    frac = (x - lo) / (hi - lo) if hi > lo else 0.0
    return "#" * max(0, round(frac * width))


def main():
    a, b, truth = gen_lagged_pair(BASE, PLANTED_LAG)
    print(f"movies: {len(a)} frames each, stim period {BASE.stim.period}, "
          f"planted lag {truth.lag:+d} (B delayed)")

    align = icr_lag(a, b, m0=M0, max_lag=MAX_LAG)
    print(f"recovered: j0 = {align.j0:+d}  ({align.direction})")
    print()

    # ---- correlation-by-lag profile ---------------------------------
    lo, hi = float(align.cor_avg.min()), float(align.cor_avg.max())
    print("mean correlation by candidate lag:")
    for lag, cor in zip(align.lags, align.cor_avg):
        star = "  <- peak" if lag == align.j0 else ""
        print(f"  j={lag:+3d}  {cor:+.4f}  |{bar(cor, lo, hi)}{star}")

    # ---- sweep of planted lags ---------------------------------------
    print()
    print("sweep: planted lag vs. recovered lag (seeds 0..4 each)")
    failures = 0
    for lag in (0, 3, 11, 18):
        got = []
        for seed in range(5):
            spec = PhantomSpec(n_frames=400, stim=StimSpec(period=20), seed=seed)
            a, b, _ = gen_lagged_pair(spec, lag)
            got.append(icr_lag(a, b, m0=M0, max_lag=MAX_LAG).j0)
        ok = all(g == lag for g in got)
        failures += not ok
        print(f"  planted {lag:2d} -> recovered {got}  {'ok' if ok else 'MISS'}")
    print()
    print("all recovered exactly" if failures == 0 else f"{failures} sweep rows missed")


if __name__ == "__main__":
    main()
