"""Push a tap list through the sounder and print what comes back.

    python3 scripts/sounder_loopback.py --snr-db 25 --seed 3
"""

import argparse

from subthz.sounding import MultipathTap, SoundingConfig, sound_channel

DEFAULT_TAPS = [(0.0, 0.0), (0.3, -3.0), (1.2, -9.5), (4.75, -17.0), (11.0, -26.0)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--snr-db", type=float, default=25.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--dynamic-range-db", type=float, default=30.0)
    args = ap.parse_args()

    cfg = SoundingConfig()
    taps = [MultipathTap(d * 1e-9, 10 ** (p / 10)) for d, p in DEFAULT_TAPS]
    cir = sound_channel(taps, cfg, snr_db=args.snr_db, rng_seed=args.seed,
                        dynamic_range_db=args.dynamic_range_db)
    print(f"frame {cfg.frame_chips} chips, step {cfg.time_step * 1e12:.0f} ps, "
          f"noise floor {cir.noise_floor:.1f} dB")
    print(f"{'true ns':>8} {'true dB':>8} {'got ns':>8} {'got dB':>8}")
    for (d, p), got in zip(DEFAULT_TAPS, cir.taps):
        print(f"{d:8.3f} {p:8.2f} {got.delay_ns:8.3f} {got.power_db:8.2f}")
    if len(cir.taps) != len(DEFAULT_TAPS):
        print(f"detected {len(cir.taps)} taps, expected {len(DEFAULT_TAPS)}")


if __name__ == "__main__":
    main()
