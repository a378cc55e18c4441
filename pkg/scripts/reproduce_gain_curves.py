"""Run a synthetic campaign and compare fitted gain curves with the closed forms.

    python3 scripts/reproduce_gain_curves.py --realizations 200 --out gain_curves_out
"""

import argparse
import json

from subthz.campaign import CampaignConfig, run_campaign
from subthz.model import MEASURED_GAINS, ds_of_gain, kfactor_of_gain, ple_of_gain


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--realizations", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="gain_curves_out")
    args = ap.parse_args()

    cfg = CampaignConfig(
        output_dir=args.out, realizations=args.realizations, seed=args.seed,
        los_conditions=(True, False), workers=args.workers,
    )
    report = run_campaign(cfg)
    per = report.summary["per_gain"]
    print(f"{report.n_records} records in {report.output_dir}")
    print(f"{'gain':>5} {'PLE':>7} {'model':>7} {'K dB':>7} {'model':>7} "
          f"{'DS LoS':>7} {'model':>7} {'DS NLoS':>8} {'model':>7}")
    for g in MEASURED_GAINS:
        los, nlos = per[f"g{g:g}_los"], per[f"g{g:g}_nlos"]
        print(
            f"{g:5.0f} {los['ple']:7.3f} {ple_of_gain(g):7.3f} "
            f"{los['mean_k_factor_db']:7.2f} {kfactor_of_gain(g):7.2f} "
            f"{los['mean_rms_ds_ns']:7.3f} {ds_of_gain(g, True):7.3f} "
            f"{nlos['mean_rms_ds_ns']:8.3f} {ds_of_gain(g, False):7.3f}"
        )
    for curve in report.summary["gain_curves"]:
        print(curve["metric"], curve["form"], [round(c, 6) for c in curve["coefficients"]])
    print(json.dumps(report.summary["trends"], indent=2))


if __name__ == "__main__":
    main()
