"""Near-field coupling of the horn beams from 0.1 to 8 m.

    python3 scripts/beam_profile.py --points 12
"""

import argparse

import numpy as np

from subthz.beam import ApertureSpec, GaussianBeam, beam_profile_table, wavelength, waist_from_gain


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=12)
    ap.add_argument("--efficiency", type=float, default=0.45)
    args = ap.parse_args()

    lam = wavelength(140e9)
    for gain in (15.0, 38.0):
        w0 = waist_from_gain(gain, args.efficiency, lam)
        beam = GaussianBeam(w0, lam)
        print(f"\n{gain:g} dBi: w0 = {w0 * 1e3:.2f} mm, z_R = {beam.rayleigh_range:.3f} m")
        rows = beam_profile_table(beam, ApertureSpec(w0), np.geomspace(0.1, 8.0, args.points))
        print(f"{'z m':>7} {'w mm':>8} {'on-axis dB':>11} {'coupled dB':>11}")
        for r in rows:
            print(f"{r['z_m']:7.3f} {r['w_m'] * 1e3:8.2f} {r['on_axis_db']:11.2f} {r['coupled_db']:11.2f}")


if __name__ == "__main__":
    main()
