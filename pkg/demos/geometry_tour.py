"""A short tour of the hyperboloid helpers.

Run with ``python3 demos/geometry_tour.py``.
"""

import numpy as np

from dualspace.lorentz import (
    euclid_to_lorentz,
    exp_map,
    geodesic_distance,
    log_map,
    lorentz_similarity,
    manifold_residual,
    origin,
)


def main():
    rng = np.random.default_rng(0)
    base = origin(2)
    far = np.array([2.0, np.sqrt(3.0), 0.0])
    print("distance origin -> (2, sqrt3, 0):", float(geodesic_distance(base, far).data))
    print("similarity of the same pair:     ", float(lorentz_similarity(base, far).data))

    # Euclidean features lifted onto the hyperboloid
    feats = rng.standard_normal((5, 3))
    points = euclid_to_lorentz(feats).data
    print("max |<y,y> + 1| after lifting:   ", manifold_residual(points).max())

    # walk along a tangent direction and come back
    tangent = log_map(points[0], points[1]).data
    again = exp_map(points[0], tangent).data
    print("exp(log(y)) - y:                 ", np.abs(again - points[1]).max())

    # the lift is the exp map at the origin, so radial distance is preserved
    for r in (0.5, 1.0, 2.0, 4.0):
        p = euclid_to_lorentz(np.array([r, 0.0])).data
        print(f"radius {r:>3}: distance from origin {float(geodesic_distance(base, p).data):.4f}")


if __name__ == "__main__":
    main()
