"""
Simulated randomized benchmarking of the four bare pulses and their mixture.

The mixture's decay is set by stochastic error alone, and its survival
probabilities at a fixed length spread far less between sequences.
"""

import numpy as np

from mixforge import RBConfig, acorn_ensemble, acorn_sources, run_rb, solve_pauli_exact


def main():
    sources = acorn_sources(solve_pauli_exact(acorn_ensemble()).w)
    print(f"{'source':>8} {'mean r':>8} {'var@64':>10}")
    for name in ("pulse1", "pulse2", "pulse3", "pulse4", "mqg"):
        runs = [run_rb(RBConfig(sources[name], seed=s)) for s in range(5)]
        r = np.mean([run.r for run in runs])
        var = np.mean([run.stats(64)["variance"] for run in runs])
        print(f"{name:>8} {r:8.4f} {var:10.2e}")


if __name__ == "__main__":
    main()
