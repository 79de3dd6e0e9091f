"""Chain evolution against the two closed-form models.

Writes K(t), chain error and Z(chi, t_max) tables for the sqrt-hopping chain
and su(1,1) chains with several Bargmann indices.
"""

import argparse
from pathlib import Path

import numpy as np

from kryloscope import analytic
from kryloscope.chain import complexity, evolve_chain
from kryloscope.counting import counting_function, default_chi_grid
from kryloscope.io import write_csv


def run(model, t, chi):
    traj = evolve_chain(model.profile(), t)
    K = complexity(traj)
    exact = analytic.exact_K(model, t)
    Z = counting_function(traj, chi, M=1).Z_values[-1]
    Zx = analytic.exact_Z(model, chi, t[-1])
    return traj, K, exact, Z, Zx


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--tmax", type=float, default=3.0)
    ap.add_argument("--points", type=int, default=61)
    ap.add_argument("--out", default="results/models")
    args = ap.parse_args()
    out = Path(args.out)
    t = np.linspace(0, args.tmax, args.points)
    chi = default_chi_grid(64)
    models = {"poisson_g1": analytic.ClosedFormModel.poisson(1.0)}
    for k in (0.25, 0.5, 1.0):
        models[f"su11_k{k}"] = analytic.ClosedFormModel.su11(1.0, k)
    for name, model in models.items():
        traj, K, exact, Z, Zx = run(model, t, chi)
        write_csv(out / f"{name}_K.csv", ["t", "K_chain", "K_exact"], zip(t, K, exact))
        write_csv(out / f"{name}_Z.csv", ["chi", "ReZ_chain", "ImZ_chain", "ReZ_exact", "ImZ_exact"],
                  zip(chi, Z.real, Z.imag, Zx.real, Zx.imag))
        rel = np.max(np.abs(K[1:] / exact[1:] - 1))
        print(f"{name:<12} N={traj.truncation_N:<6} max rel K err {rel:.2e}  max |dZ| {np.max(np.abs(Z - Zx)):.2e}")


if __name__ == "__main__":
    main()
