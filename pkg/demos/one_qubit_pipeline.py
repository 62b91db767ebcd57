"""
GRAPE candidates for X(pi/2), then plain and robust generator-exact mixtures.

Prints diamond distances along the amplitude-error axis for the best bare
pulse and for both mixtures, plus the support size of sparse solutions.
"""

import numpy as np

from mixforge import (GrapeOptions, HamiltonianModel, SynthesisConfig, build_ensemble, grape_optimize,
                      rotation, sensitivity_scan, solve_generator_exact, solve_robust, solve_sparse)

N_PULSES = 150


def main():
    target = rotation("X", np.pi / 2)
    model = HamiltonianModel.one_qubit()
    pulses = [grape_optimize(target, model, seed=[7, i], opts=GrapeOptions(n_steps=25, total_time=np.pi))
              for i in range(N_PULSES)]
    ens = build_ensemble(pulses, target, model)
    plain = solve_generator_exact(ens)
    robust = solve_robust(ens)
    print(f"generator residual: plain {plain.residual:.1e}, robust {robust.residual:.1e}")

    grid = np.linspace(-0.01, 0.01, 9)
    bare = np.array([[pt.diamond for pt in sensitivity_scan(p, model, target, "delta", grid)] for p in pulses])
    curves = {
        "best bare": bare.min(axis=0),
        "plain": [pt.diamond for pt in sensitivity_scan(plain, model, target, "delta", grid, pulses=pulses)],
        "robust": [pt.diamond for pt in sensitivity_scan(robust, model, target, "delta", grid, pulses=pulses)],
    }
    print("delta      " + "  ".join(f"{k:>10}" for k in curves))
    for i, d in enumerate(grid):
        print(f"{d:+.4f}    " + "  ".join(f"{curves[k][i]:10.2e}" for k in curves))

    cfg = SynthesisConfig(prune_threshold=1e-6)
    for lam in (0.0, 1e-4, 5e-4):
        res = solve_sparse(ens, lam, cfg)
        print(f"lambda {lam:.1e}: {res.support_size(1e-3)} members carry weight")


if __name__ == "__main__":
    main()
