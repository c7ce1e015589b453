#!/usr/bin/env python3
"""Print the battery-duration comparison table for both transponder
platforms, plus a sweep of model-only predictions at finer intervals."""

from wxkit import energy
from wxkit.cli import main as cli_main


def sweep():
    print("model sweep (days):")
    header = "  ".join(f"{m:>6}m" for m in (5, 10, 15, 20, 30, 45, 60, 120))
    print(f"{'platform':<8}  {header}")
    for name, profile in sorted(energy.PROFILES.items()):
        cells = []
        for minutes in (5, 10, 15, 20, 30, 45, 60, 120):
            cells.append(f"{energy.battery_life_days(profile, minutes * 60):>7.1f}")
        print(f"{name:<8}  {'  '.join(cells)}")


if __name__ == "__main__":
    cli_main(["battery", "--table"])
    print()
    sweep()
