"""How one energy-constrained graph layer prunes edges and pulls nodes together.

Run with ``python3 demos/energy_pruning.py``.
"""

import numpy as np

from dualspace.hypergraph import hegcn_layer, lshad_threshold
from dualspace.lorentz import HyperbolicLinearParams, euclid_to_lorentz


def main():
    print("threshold by layer (energy 0 and 100):")
    for layer in (1, 2, 3, 4):
        print(f"  layer {layer}: {lshad_threshold(0.0, layer):.4f}  {lshad_threshold(100.0, layer):.4f}")

    rng = np.random.default_rng(3)
    T, D = 24, 8
    nodes = euclid_to_lorentz(rng.standard_normal((T, D)))
    params = HyperbolicLinearParams(
        rng.standard_normal((D, D + 1)) / np.sqrt(D + 1), v=0.3 * rng.standard_normal(D + 1)
    )
    for layer in (1, 2, 3):
        trace = []
        hegcn_layer(nodes, layer, params, trace=trace)
        t = trace[0]
        print(
            f"layer {layer}: threshold {t.threshold:.3f}, kept {t.kept_fraction:.0%} of edges, "
            f"energy {t.energy_pre:.1f} -> {t.energy_post:.1f}"
        )


if __name__ == "__main__":
    main()
