"""Semiclassical growth laws for each deformation class.

Integrates the growing-manifold saddle for one representative of each class,
classifies its b(n), and compares the fitted growth law with the prediction.
"""

import argparse
from pathlib import Path

import numpy as np

from kryloscope.io import write_json
from kryloscope.profiles import LanczosProfile
from kryloscope.semiclassics import GROWING, classify_growth, growth_power, integrate_hamilton, lyapunov_rate

CASES = {
    "linear_shift": (LanczosProfile.linear_shift(1.0, 3.0), 15.0),
    "log_drift": (LanczosProfile.log_drift(1.0, 2.0), 15.0),
    "marginal": (LanczosProfile.marginal(1.0, 0.3), 80.0),
    "power_law": (LanczosProfile.power_law(1.0, 0.5), 1000.0),
}


def measure(profile, tmax):
    traj = integrate_hamilton(profile, 1.0, GROWING, np.linspace(0, tmax, 2001))
    gc = classify_growth(profile)
    law = gc.predicted_law
    if law.get("type") == "polynomial":
        measured = {"exponent": growth_power(traj)[0]}
    elif law.get("type") == "exponential_power_log":
        measured = {"power": growth_power(traj, (tmax / 4, tmax), rate=law["rate"])[0]}
    else:
        measured = {"rate": lyapunov_rate(traj)[0]}
    return gc, measured


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/growth_classes.json")
    args = ap.parse_args()
    report = {}
    for name, (profile, tmax) in CASES.items():
        gc, measured = measure(profile, tmax)
        report[name] = {"class": gc.growth_class, "parameters": gc.parameters,
                        "predicted": gc.predicted_law, "measured": measured}
        print(f"{name:<13} {gc.growth_class:<22} predicted {gc.predicted_law}  measured {measured}")
    write_json(Path(args.out), report)


if __name__ == "__main__":
    main()
