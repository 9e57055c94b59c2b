"""Hopf partitions of the countable actions in the shipped battery."""

from horohopf import ergodic as eg


def main():
    for action in eg.canonical_battery(extended=True):
        part = eg.hopf_partition(action, depth=8)
        cells = {c: len(v) for c, v in part.cells.items()}
        print(f"{action.name}")
        print(f"  orbits per cell {cells}  checks {'ok' if part.all_passed else 'FAILED'}")
        for rep in part.reports[:3]:
            low, high = rep.mu_total
            print(f"    {rep.base_point!r:12s} {rep.freeness:20s} {rep.verdict:22s} mu in [{low}, {high}]")


if __name__ == "__main__":
    main()
