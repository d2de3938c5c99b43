"""Poking at the calibrated cost tables.

Shows calibrated train times and memory, a log-linear interpolation at an
uncalibrated batch size, the proximal-training time overhead, and a memory
feasibility check against the default device.

    python3 demos/cost_exploration.py
"""

from fedsim.costs import DeviceSpec, check_memory, load_calibration, lookup


def main():
    cal = load_calibration()
    v8 = cal.profile("v8")

    print("v8 train time and peak memory at batch 32:")
    for res in (320, 640, 960):
        e = lookup(v8, res, 32)
        print(f"  {res:>3}px: {e.train_time_s:>7.1f} s  {e.peak_mem_mib:>9.1f} MiB")

    print("\nv8 at 960px across batch sizes (memory scales with batch):")
    for batch in (4, 8, 16, 32):
        e = lookup(v8, 960, batch)
        print(f"  batch {batch:>2}: {e.train_time_s:>7.1f} s  "
              f"{e.peak_mem_mib:>9.1f} MiB")

    e12 = lookup(v8, 960, 12)
    print(f"\nInterpolated at batch 12 (log-linear between 8 and 16): "
          f"{e12.train_time_s:.1f} s, {e12.peak_mem_mib:.1f} MiB "
          f"[estimated={e12.estimated}]")

    base = lookup(v8, 640, 32)
    print(f"\nProximal training overhead: {base.train_time_s:.1f} s -> "
          f"{base.train_time_s * cal.fedprox_time_factor:.2f} s "
          f"(factor {cal.fedprox_time_factor})")

    device = DeviceSpec()
    for res, batch in ((640, 32), (960, 32), (960, 16)):
        e = lookup(v8, res, batch)
        fits = check_memory(e, device)
        verdict = "fits" if fits else "OOM"
        print(f"\n{res}px batch {batch}: {e.peak_mem_mib:.0f} MiB vs "
              f"{device.mem_capacity_mib:.0f} MiB capacity -> {verdict}")


if __name__ == "__main__":
    main()
