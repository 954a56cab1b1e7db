"""Walk one episode of a small AND/OR graph by hand.

Builds the youBot supply line from the bundled defect-inspection scenario
and drives it from the initial feasible leaf all the way to the root,
printing the feasible sets after every step so you can watch the calculus
at work.

Run: python demos/01_graph_basics.py
"""

from andorplan import Episode
from andorplan.scenario import load_bundled


def show(ep, note):
    nodes, arcs = ep.feasible_sets()
    print(f"{note:<44} feasible nodes={sorted(nodes) or '-'} arcs={sorted(arcs) or '-'}")


def main():
    scenario = load_bundled("defect_inspection")
    g1 = scenario.model.graph("G1")

    print("The supply line is a chain of seven cooperation states:")
    for n in g1.nodes:
        kind = "leaf" if g1.is_leaf(n.id) else ("root" if n.id == g1.root else "state")
        print(f"  {n.display:<18} [{kind}]")
    print()

    ep = Episode(g1)
    show(ep, "fresh episode (leaf feasible)")

    # Perception confirms the object is in the warehouse area.
    ep.meet_node("obj_in_ws")
    show(ep, "met 'obj in ws'")

    # Execute arcs in chain order: every action in precedence order, then
    # confirm the newly reachable state.
    for arc in (
        "h_reach_object",
        "h_pick_object",
        "h_carry_to_human",
        "h_announce_pickup",
        "h_handover",
        "h_place_on_table",
    ):
        h = g1.arc(arc)
        for a in h.actions:
            ep.record_action_done(arc, a.id)
        show(ep, f"solved {arc}")
        ep.meet_node(h.parent)
        show(ep, f"met '{g1.node(h.parent).display}'")

    print(f"\nepisode status: {ep.status.value}")


if __name__ == "__main__":
    main()
