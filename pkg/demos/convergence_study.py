"""Round-by-round convergence of synchronous averaging on the kitti-4 plan.

Runs the built-in ``kitti-sync`` scenario for a few seeds and prints the
per-round evaluation accuracy, showing steady improvement round over round.

    python3 demos/convergence_study.py
"""

from fedsim.orchestrator import run_sync
from fedsim.scenarios import scenario_config


def main():
    seeds = (0, 1, 2)
    histories = {}
    for seed in seeds:
        result = run_sync(scenario_config("kitti-sync", seed=seed))
        histories[seed] = dict(result.history)

    rounds = sorted(histories[seeds[0]])
    header = "round " + "".join(f"  seed={s:<6}" for s in seeds)
    print(header)
    print("-" * len(header))
    for rnd in rounds:
        row = "".join(f"  {histories[s][rnd]:<8.4f}" for s in seeds)
        print(f"{rnd:>5} {row}")
    print()
    for seed in seeds:
        accs = [histories[seed][r] for r in rounds]
        print(f"seed {seed}: final accuracy {accs[-1]:.4f} "
              f"(started at {accs[0]:.4f})")


if __name__ == "__main__":
    main()
