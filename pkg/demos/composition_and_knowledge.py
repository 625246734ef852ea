"""
Knowledge properties are not preserved by composition.

Each constant program alone leaves its agent ignorant of the other agent's
variable. Composed, both variables are fixed in every structure, so each
agent knows the other's value at every cut.
"""

from __future__ import annotations

from cutknow.automata import compose
from cutknow.epistemics import constant_program, eval_know, initial_cut, never_knows_other
from cutknow.explorer import ExploreConfig, explore


def holds_everywhere(pg, agent: str) -> bool:
    system = explore(None, pg, ExploreConfig(depth=3))
    return all(eval_know(system, initial_cut(es), never_knows_other(agent)) for es in system)


def main() -> None:
    pg1, pg2 = constant_program("1"), constant_program("2")
    both = compose(pg1, pg2)
    print(f"Pg_1      never K_1(x2=2): {holds_everywhere(pg1, '1')}")
    print(f"Pg_2      never K_2(x1=1): {holds_everywhere(pg2, '2')}")
    print(f"Pg_1+Pg_2 never K_1(x2=2): {holds_everywhere(both, '1')}")
    print(f"Pg_1+Pg_2 never K_2(x1=1): {holds_everywhere(both, '2')}")


if __name__ == "__main__":
    main()
