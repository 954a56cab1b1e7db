"""Alternative branches, overrides and sibling suppression.

The inspection line has three OR-branches out of "obj checked" (faulty,
non-faulty, defect not assessable). The planner always proposes the
cheapest branch; here an operator override completes a dearer branch
instead, and the two alternatives sharing the checked object are
suppressed for the rest of the episode.

Run: python demos/02_alternatives_and_suppression.py
"""

from andorplan import ConcurrentModel, Event, best_path, handle_event, initialize_episodes
from andorplan.scenario import load_bundled


def main():
    scenario = load_bundled("defect_inspection")
    g2 = scenario.model.graph("G2")
    model = ConcurrentModel([g2])
    states = initialize_episodes(model, initially_met={"G2": {"new_object"}})
    ep = states["G2"]

    print("three cooperation paths from 'new object' to 'inspected':")
    from andorplan import enumerate_paths

    for p in enumerate_paths(g2, ep):
        print(f"  cost {p.total_cost:5.1f}  via {p.arcs}")

    print(f"\nplanner prefers: {best_path(g2, ep).arcs}")

    # Drive to the branch point.
    for arc in ("h_grasp_object", "h_check_object"):
        for a in g2.arc(arc).actions:
            handle_event(model, states, Event("action-done", "G2", hyper_arc=arc, action=a.id))
        handle_event(model, states, Event("node-met", "G2", node=g2.arc(arc).parent))

    print(f"at the branch point, best path: {best_path(g2, ep).arcs}")

    # The inspection actually reported "not assessable": the operator takes
    # the dearer hand-back branch, overriding the suggestion.
    for a in g2.arc("h_handback_na").actions:
        result = handle_event(
            model, states, Event("override", "G2", hyper_arc="h_handback_na", action=a.id)
        )
        assert result.accepted

    print("\nafter the override completed the hand-back branch:")
    for arc in ("h_store_faulty", "h_store_non_faulty", "h_handback_na"):
        flags = []
        if ep.is_solved(arc):
            flags.append("solved")
        if ep.is_suppressed(arc):
            flags.append("suppressed")
        print(f"  {arc:<22} {'+'.join(flags) or 'open'}")

    handle_event(model, states, Event("node-met", "G2", node="obj_returned"))
    print(f"\nreplanned best path: {best_path(g2, ep).arcs}")
    print("suppressed branches can never re-enter a path.")


if __name__ == "__main__":
    main()
