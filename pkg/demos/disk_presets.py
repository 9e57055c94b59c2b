"""The two Fuchsian presets side by side.

The Schottky group has infinite covolume: almost every circle point is
dissipative and the series converge.  The modular lattice has finite
covolume: almost every point is conservative.  The ball counts show how
far the Schottky orbit drifts from the free-group word count as the
radius grows.
"""

import math

from horohopf import classifier as cl
from horohopf import disk as dk


def ball_counts():
    sch = dk.preset("schottky")
    big = dk.orbit_ball(sch, 8 * 8 + 4)
    print("Schottky orbit count versus 1 + 2(3^L - 1) at R = 8L + 4")
    for L in range(1, 9):
        n = len(big.restrict(8 * L + 4))
        free = 1 + 2 * (3**L - 1)
        print(f"  L={L}  ball={n:6d}  free={free:6d}  ratio={n / free:.3f}")


def classify():
    sch = dk.DiskOrbit(dk.orbit_ball(dk.preset("schottky"), 48))
    p = cl.ClassifierParams(radius_schedule=(24, 32, 40, 48), sample_count=100, seed=1)
    est = cl.monte_carlo_mass(sch, cl.CircleSampler(), cl.visual_stream(), p)
    print(f"schottky: dissipative {est.dissipative}/{est.samples}")

    lat = dk.DiskOrbit(dk.orbit_ball(dk.preset("lattice-psl2z"), 10))
    p = cl.ClassifierParams(radius_schedule=(4, 6, 8, 10), sample_count=100, seed=1)
    est = cl.monte_carlo_mass(lat, cl.CircleSampler(), cl.visual_stream(), p)
    print(f"lattice:  conservative {est.conservative}/{est.samples}, by radius {est.fraction_by_radius}")
    print(f"lattice delta bound log 2 = {math.log(2):.4f}")


if __name__ == "__main__":
    ball_counts()
    classify()
