"""
What the receiver knows in Stenning's protocol, cut by cut.

Explores every structure of the one-bit protocol up to six events, then
reports at how many cuts R knows X(0), and prints a cut where R does not yet
know it together with an indistinguishable cut that explains why.
"""

from __future__ import annotations

from cutknow.epistemics import KnowledgeModel, distinguishing_cut, initial_cut
from cutknow.events import ConsistentCut, cut_frontiers
from cutknow.explorer import ExploreConfig, explore
from cutknow.formats import write_trace
from cutknow.stp import build_stenning
from cutknow.syntax import parse_formula


def main() -> None:
    system = explore(None, build_stenning(1), ExploreConfig(depth=6))
    model = KnowledgeModel.of(system)
    knows = parse_formula("(K R (= (idx X 0) 1))")
    cuts = [ConsistentCut(es, f) for es in system for f in cut_frontiers(es)]
    hits = [c for c in cuts if model.holds(c, knows)]
    print(f"{len(system)} structures, {len(cuts)} cuts; R knows X(0)=1 at {len(hits)} of them")

    c = initial_cut(next(es for es in system if es.initstate["S"]["X"] == (1,)))
    w = distinguishing_cut(system, c, knows)
    print("\nat the initial cut R does not know X(0)=1; an indistinguishable cut where it is false:")
    print(f"frontier {list(w.frontier)} of")
    print(write_trace(w.structure))

    first = min(hits, key=lambda h: sum(h.frontier))
    r = first.local("R")
    print(f"R first knows it after {sum(first.frontier)} events, once Y={r['Y']} and x_R={r['x_R']}")


if __name__ == "__main__":
    main()
