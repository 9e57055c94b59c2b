"""Horoball occupancy for subgroups of F_2.

Folds three subgroups, then for a few eventually periodic rays prints the
occupancy N(t, R) at level t = 0, the series partial sums, the exact
decision read off the core graph and the heuristic label.
"""

from horohopf import classifier as cl
from horohopf import freegroup as fg

SUBGROUPS = {"<a>": ["a"], "<a^2, ab, aB>": ["aa", "ab", "aB"], "<a^2, b>": ["aa", "b"]}
RAYS = ["(a)", "b(a)", "(ab)", "a(b)"]


def main():
    stream = cl.tree_stream(2)
    params = cl.ClassifierParams(radius_schedule=(10, 20, 30, 40, 50, 60))
    for name, gens in SUBGROUPS.items():
        graph = fg.stallings_fold(gens, 2)
        print(f"{name}: core graph with {graph.n_vertices} vertices")
        print(graph.to_text(), end="")
        orbit = fg.SubgroupOrbit(graph)
        for ray in RAYS:
            v = cl.classify_point(orbit, fg.parse_ray(ray), stream, params)
            exact = v.flags["exact_decision"]
            where = "read forever" if exact["in_big_horospheric"] else f"exits at letter {exact['exit_position']}"
            print(
                f"  {ray:6s} N(0, R) = {[int(n) for n in v.occupancy.row(0)]}  S(60) = {float(v.series_partials[-1]):.4g}"
                f"  {where:20s} -> {v.label} (heuristic {v.heuristic_label})"
            )
        print()


if __name__ == "__main__":
    main()
