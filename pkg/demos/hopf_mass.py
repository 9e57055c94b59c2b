"""Monte Carlo mass of the conservative part for subgroups of F_2.

Finite-index subgroups carry full mass; infinite-index ones carry none,
even when some rays (such as a^inf for <a>) are conservative.  For
<a^2, b> most samples stay inconclusive on this schedule: its core graph
has long readable stretches, so a ray can hover near the horoball for a
while before it exits.
"""

import sys

from horohopf import classifier as cl
from horohopf import freegroup as fg

CASES = [
    ("F_2", ["a", "b"]),
    ("index 2", ["aa", "ab", "aB"]),
    ("index 3", ["aaa", "b", "abA", "aabAA"]),
    ("<a>", ["a"]),
    ("<a^2, b>", ["aa", "b"]),
]


def main(workers=1):
    stream = cl.tree_stream(2)
    params = cl.ClassifierParams(radius_schedule=(10, 20, 30, 40, 50, 60), sample_count=500, seed=2024)
    for name, gens in CASES:
        graph = fg.stallings_fold(gens, 2)
        est = cl.monte_carlo_mass(fg.SubgroupOrbit(graph), cl.TreeRaySampler(2), stream, params, workers=workers)
        lo, hi = est.interval
        print(
            f"{name:10s} vertices={graph.n_vertices}  conservative {est.fraction:.3f} "
            f"[{lo:.3f}, {hi:.3f}]  inconclusive {est.inconclusive_rate:.3f}"
        )


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 1)
