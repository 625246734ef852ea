"""
Verify Stenning's protocol, then break it five ways.

Prints the verdicts for the correct two-bit protocol and, for each injected
fault, the first condition it violates with the event that shows it.
"""

from __future__ import annotations

from cutknow.explorer import ExploreConfig, explore
from cutknow.stp import build_stenning, check_correspondence, check_psi_conditions, check_safety

FAULTS = ["skip-x_R-update", "decrement-x_R", "reset-x_S", "overshoot-x_S", "ignore-requests"]


def report(mutation: str | None) -> None:
    cfg = ExploreConfig(depth=8)
    pg = build_stenning(2, mutation)
    system = explore(None, pg, cfg)
    safety = check_safety(pg, cfg).ok
    corr = check_correspondence(system).ok
    failed = [(name, v) for name, v in check_psi_conditions(system, cfg).items() if not v.ok]
    print(f"{mutation or 'correct':<16} safety={safety} correspondence={corr}")
    for name, v in failed:
        print(f"    {name}: {v.witness}")


def main() -> None:
    for mutation in [None, *FAULTS]:
        report(mutation)


if __name__ == "__main__":
    main()
