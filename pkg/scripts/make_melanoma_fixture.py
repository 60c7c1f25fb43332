"""Rebuild src/ppsurv/data/melanoma.csv.

The individual-level E1684/E1690 stage-4 records are not available in this
environment, so this script synthesizes subject rows that reproduce the
published per-cell aggregates exactly (sample size, event count and total
risk time by study x treatment x node group).

Construction, per cell with n subjects, e events and risk time R:
  * event times are the midpoint quantiles of the earliest e/n fraction of a
    piecewise-exponential law whose hazard is the stratum baseline shape
    scaled by the cell's crude rate relative to the stratum's pooled rate;
  * the n - e censored follow-up times are spread evenly above the last
    event quantile (or around their mean when follow-up is short) with their
    mean set so that the cell total equals R.

    python scripts/make_melanoma_fixture.py
"""
from pathlib import Path

import numpy as np
import pandas as pd

# study, trt (0 = OBS, 1 = IFN), stratum (1: <=2 nodes, 2: >=3 nodes), n, events, risk time
CELLS = [
    (1684, 0, 1, 37, 26, 88.4),
    (1684, 0, 2, 47, 36, 105.8),
    (1684, 1, 1, 44, 21, 176.3),
    (1684, 1, 2, 39, 31, 81.1),
    (1690, 0, 1, 51, 23, 122.4),
    (1690, 0, 2, 53, 42, 78.9),
    (1690, 1, 1, 51, 29, 123.1),
    (1690, 1, 2, 59, 36, 137.0),
]
# decreasing relapse hazard (per year): change points and hazards per stratum
BASELINE = {
    1: (np.array([0.3, 0.62, 1.33]), np.array([0.48, 0.53, 0.29, 0.10])),
    2: (np.array([0.26, 0.83]), np.array([1.06, 0.68, 0.17])),
}


def pwe_quantile(u, cuts, haz):
    """Inverse CDF of the piecewise-exponential law."""
    target = -np.log1p(-np.asarray(u))
    bounds = np.concatenate([[0.0], cuts])
    cum = np.concatenate([[0.0], np.cumsum(np.diff(np.concatenate([bounds, [np.inf]]))[:-1] * haz[:-1])])
    k = np.searchsorted(cum, target, side="right") - 1
    return bounds[k] + (target - cum[k]) / haz[k]


def make_cell(stratum, n, events, risk_time, scale):
    cuts, haz = BASELINE[stratum]
    haz = haz * scale
    frac = events / n
    t_event = pwe_quantile(frac * (np.arange(events) + 0.5) / events, cuts, haz)
    tau = float(pwe_quantile(frac, cuts, haz))
    m = n - events
    mean_c = (risk_time - t_event.sum()) / m
    spread = (np.arange(m) + 0.5) / m
    if mean_c > tau:
        t_cens = tau + 2 * (mean_c - tau) * spread
    else:
        # short follow-up: censoring interleaves with the events
        t_cens = mean_c * (0.4 + 1.2 * spread)
    y = np.round(np.concatenate([t_event, t_cens]), 4)
    y[-1] = np.round(y[-1] + (risk_time - y.sum()), 4)
    return y, np.concatenate([np.ones(events, dtype=int), np.zeros(m, dtype=int)])


def main():
    pooled = {}
    for _, _, s, n, e, r in CELLS:
        ev, rt = pooled.get(s, (0, 0.0))
        pooled[s] = (ev + e, rt + r)
    rows = []
    for study, trt, stratum, n, events, risk_time in CELLS:
        scale = (events / risk_time) / (pooled[stratum][0] / pooled[stratum][1])
        y, ev = make_cell(stratum, n, events, risk_time, scale)
        for yi, ei in zip(y, ev):
            rows.append({"study": study, "trt": trt, "stratum": stratum,
                         "failtime": f"{yi:.4f}", "rfscens": int(ei)})
    out = Path(__file__).resolve().parents[1] / "src" / "ppsurv" / "data" / "melanoma.csv"
    pd.DataFrame(rows).to_csv(out, index=False)
    print(f"wrote {len(rows)} rows to {out}")


if __name__ == "__main__":
    main()
