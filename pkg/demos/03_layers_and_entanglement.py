"""How the layered model couples the two lines.

Two mechanisms connect graphs:

* the termination layer's arcs are *backed* by the whole supply and
  inspection graphs (their feasible/solved flags mirror the subgraphs);
* the inspection line's "new object" leaf is *entangled* with the supply
  line's root, so a delivery on one side unlocks work on the other.

Run: python demos/03_layers_and_entanglement.py
"""

from andorplan import initialize_episodes
from andorplan.hierarchy import graph_feasible
from andorplan.scenario import export_dot, load_bundled


def flags(states, graph, arc):
    ep = states[graph]
    return (
        f"feasible={ep.is_arc_feasible(arc)!s:<5} solved={ep.is_solved(arc)!s:<5}"
    )


def main():
    scenario = load_bundled("defect_inspection")
    model = scenario.model

    print("transitions (upper arc -> backing subgraph):")
    for t in model.transitions.values():
        print(f"  T:{t.hyper_arc:<10} -> {t.subgraph}   child map {dict(t.child_map)}")
    print("entanglement links:")
    for l in model.entanglements:
        print(f"  {l.source_graph}:{l.source_node}  mirrors onto  {l.dependent_graph}:{l.dependent_node}")

    states = initialize_episodes(model)
    print("\nat initialization:")
    print(f"  G1 feasible as a graph: {graph_feasible(states['G1'])}")
    print(f"  T:t_fetch   {flags(states, 'T', 't_fetch')}  (slaved to G1)")
    print(f"  G2 'new_object' met: {states['G2'].is_met('new_object')}  (gated, waiting)")

    # Drive the supply line to its root; the mirror fires inside the same
    # transaction.
    ep1 = states["G1"]
    ep1.meet_node("obj_in_ws")
    g1 = model.graph("G1")
    for arc in (
        "h_reach_object",
        "h_pick_object",
        "h_carry_to_human",
        "h_announce_pickup",
        "h_handover",
        "h_place_on_table",
    ):
        for a in g1.arc(arc).actions:
            ep1.record_action_done(arc, a.id)
        ep1.meet_node(g1.arc(arc).parent)

    from andorplan import propagate_entanglement, sync_hierarchy

    cascade = propagate_entanglement(model, states, ("G1", "obj_on_table"))
    sync_hierarchy(model, states)

    print("\nafter the supply line delivered (root met):")
    print(f"  cascade: {cascade}")
    print(f"  G2 'new_object' met: {states['G2'].is_met('new_object')}")
    print(f"  G2 grasp arc feasible: {states['G2'].is_arc_feasible('h_grasp_object')}")
    print(f"  T:t_fetch   {flags(states, 'T', 't_fetch')}  (G1 solved)")

    print("\nGraphviz view of the supply line (entangled nodes in red):\n")
    print(export_dot(model, "G1"))


if __name__ == "__main__":
    main()
