"""Layered-model wiring: subgraph transitions and entangled nodes."""

from __future__ import annotations

import random

import pytest

from andorplan import (
    Action,
    ConcurrentModel,
    Episode,
    EpisodeStatus,
    GraphStructure,
    HyperArc,
    ModelError,
    Node,
    check_invariants,
    initialize_episodes,
    propagate_entanglement,
    sync_hierarchy,
)
from andorplan.hierarchy import graph_feasible
from andorplan.planner import Event, handle_event
from andorplan.scenario import load_bundled

from conftest import rand_graph


def action(aid: str) -> Action:
    return Action(id=aid, label=aid, eligible_agents=frozenset({"a1"}), duration_mean=1.0)


def simple_chain(graph_id: str, layer: int = 0) -> GraphStructure:
    return GraphStructure(
        graph_id,
        (Node(f"{graph_id}_leaf"), Node(f"{graph_id}_root")),
        (
            HyperArc(
                f"{graph_id}_h",
                frozenset({f"{graph_id}_leaf"}),
                f"{graph_id}_root",
                (action(f"{graph_id}_a"),),
                1.0,
            ),
        ),
        f"{graph_id}_root",
        layer=layer,
    )


def two_layer_model() -> ConcurrentModel:
    lower = simple_chain("L", layer=0)
    upper = simple_chain("U", layer=1)
    model = ConcurrentModel([lower, upper])
    model.attach_subgraph(
        "U", "U_h", "L", {"U_leaf": "L_leaf"}, {"U_root": "L_root"}
    )
    return model


def rand_two_layer(rng: random.Random) -> ConcurrentModel:
    """Random lower graph backing one arc of a random upper graph."""
    lower = rand_graph(rng, graph_id="L", layer=0)
    while True:
        upper = rand_graph(rng, max_nodes=6, max_arcs=4, graph_id="U", layer=1)
        candidates = [
            h for h in upper.hyper_arcs if len(h.children) <= len(lower.leaves)
        ]
        if candidates:
            break
    arc = sorted(candidates, key=lambda h: h.id)[0]
    model = ConcurrentModel([lower, upper])
    model.attach_subgraph(
        "U",
        arc.id,
        "L",
        dict(zip(sorted(arc.children), sorted(lower.leaves))),
        {arc.parent: lower.root},
    )
    return model


def model_moves(model: ConcurrentModel, states: dict) -> list[Event]:
    out: list[Event] = []
    for g in model.gamma_order():
        ep = states[g.id]
        if ep.status is not EpisodeStatus.IN_PROGRESS:
            continue
        nodes, arcs = ep.feasible_sets()
        out.extend(Event("node-met", g.id, node=n) for n in sorted(nodes))
        for h in sorted(arcs):
            if (g.id, h) in model.transitions:
                continue  # backed arcs only progress through their subgraph
            nxt = ep.next_action(h)
            if nxt is not None:
                out.append(Event("action-done", g.id, hyper_arc=h, action=nxt))
    return out


def drive_model(model, states, rng, max_steps=300, check=None):
    for _ in range(max_steps):
        moves = model_moves(model, states)
        if not moves:
            break
        result = handle_event(model, states, rng.choice(moves))
        assert result.accepted, result.reason
        if check is not None:
            check()
    return states


class TestAttachSubgraph:
    def test_minimal_two_layer_accepted(self):
        model = two_layer_model()
        assert model.validate() == []
        assert model.transitions[("U", "U_h")].subgraph == "L"

    def test_non_injective_child_map_rejected(self):
        lower = simple_chain("L")
        upper = GraphStructure(
            "U",
            (Node("c1"), Node("c2"), Node("r")),
            (HyperArc("h", frozenset({"c1", "c2"}), "r", (action("a"),), 1.0),),
            "r",
            layer=1,
        )
        model = ConcurrentModel([lower, upper])
        with pytest.raises(ModelError, match="injective"):
            model.attach_subgraph(
                "U", "h", "L", {"c1": "L_leaf", "c2": "L_leaf"}, {"r": "L_root"}
            )

    def test_layer_violation_rejected(self):
        a = simple_chain("A", layer=1)
        b = simple_chain("B", layer=1)
        model = ConcurrentModel([a, b], termination_graph="B")
        with pytest.raises(ModelError, match="layer"):
            model.attach_subgraph("B", "B_h", "A", {"B_leaf": "A_leaf"}, {"B_root": "A_root"})

    def test_already_backed_rejected(self):
        model = two_layer_model()
        extra = simple_chain("M", layer=0)
        model.graphs["M"] = extra  # second candidate subgraph
        with pytest.raises(ModelError, match="already backed"):
            model.attach_subgraph("U", "U_h", "M", {"U_leaf": "M_leaf"}, {"U_root": "M_root"})

    def test_one_transition_per_subgraph(self):
        lower = simple_chain("L")
        upper = GraphStructure(
            "U",
            (Node("c1"), Node("mid"), Node("r")),
            (
                HyperArc("h1", frozenset({"c1"}), "mid", (action("a1"),), 1.0),
                HyperArc("h2", frozenset({"mid"}), "r", (action("a2"),), 1.0),
            ),
            "r",
            layer=1,
        )
        model = ConcurrentModel([lower, upper])
        model.attach_subgraph("U", "h1", "L", {"c1": "L_leaf"}, {"mid": "L_root"})
        with pytest.raises(ModelError, match="already targeted"):
            model.attach_subgraph("U", "h2", "L", {"mid": "L_leaf"}, {"r": "L_root"})

    def test_bundled_termination_layer_is_wired_over_both_lines(self):
        model = load_bundled("defect_inspection").model
        assert model.validate() == []
        assert {t.subgraph for t in model.transitions.values()} == {"G1", "G2"}
        assert all(t.graph == "T" for t in model.transitions.values())
        # Transition maps target each line's leaf layer and root.
        t_fetch = model.transitions[("T", "t_fetch")]
        assert dict(t_fetch.child_map) == {"fetch_ready": "obj_in_ws"}
        assert t_fetch.parent_map == ("fetch_complete", "obj_on_table")


class TestSyncHierarchy:
    def test_subgraph_leaves_make_backing_arc_feasible(self):
        model = two_layer_model()
        states = initialize_episodes(model)
        # The lower graph starts with a feasible leaf, so it is feasible as
        # a whole and the backing arc mirrors that immediately.
        assert graph_feasible(states["L"])
        assert states["U"].is_arc_feasible("U_h")

    def test_subgraph_solved_solves_backing_arc(self):
        model = two_layer_model()
        states = initialize_episodes(model)
        states["L"].meet_node("L_leaf")
        states["L"].record_action_done("L_h", "L_a")
        states["L"].meet_node("L_root")
        changes = sync_hierarchy(model, states)
        assert states["U"].is_solved("U_h")
        assert states["U"].is_node_feasible("U_root")
        assert ("solved", "U", "U_h", []) in changes

    def test_failed_subgraph_kills_backing_arc_and_upper(self):
        lower = GraphStructure(
            "L",
            (Node("l1"), Node("l2"), Node("mid"), Node("lr")),
            (
                HyperArc("h1", frozenset({"l1"}), "mid", (action("a1"),), 1.0),
                HyperArc("h2", frozenset({"l1", "l2"}), "lr", (action("a2"),), 1.0),
            ),
            "lr",
        )
        upper = simple_chain("U", layer=1)
        model = ConcurrentModel([lower, upper])
        model.attach_subgraph("U", "U_h", "L", {"U_leaf": "l1"}, {"U_root": "lr"})
        states = initialize_episodes(model)
        states["U"].meet_node("U_leaf")
        states["L"].meet_node("l1")
        states["L"].record_action_done("h1", "a1")  # suppresses h2
        states["L"].meet_node("mid")
        states["L"].meet_node("l2")
        assert states["L"].status is EpisodeStatus.FAILED
        sync_hierarchy(model, states)
        assert not states["U"].is_arc_feasible("U_h")
        assert states["U"].status is EpisodeStatus.FAILED

    def test_sync_requires_all_states(self):
        model = two_layer_model()
        states = initialize_episodes(model)
        del states["L"]
        with pytest.raises(ModelError, match="missing episode state"):
            sync_hierarchy(model, states)

    def test_fixed_point_matches_direct_evaluation_on_random_models(self):
        rng = random.Random(21)
        for _ in range(40):
            model = rand_two_layer(rng)
            states = initialize_episodes(model)

            def direct_check():
                problems = check_invariants(model, states)
                assert problems == [], problems

            direct_check()
            drive_model(model, states, rng, check=direct_check)


class TestLinkEntangled:
    def test_bundled_link_accepted(self):
        model = load_bundled("defect_inspection").model
        assert [(l.source, l.dependent) for l in model.entanglements] == [
            (("G1", "obj_on_table"), ("G2", "new_object"))
        ]

    def test_internal_dependent_rejected(self):
        a = simple_chain("A")
        b = simple_chain("B", layer=1)
        model = ConcurrentModel([a, b])
        with pytest.raises(ModelError, match="leaf"):
            model.link_entangled(("A", "A_root"), ("B", "B_root"))

    def test_dependency_cycle_rejected(self):
        a = simple_chain("A")
        b = simple_chain("B", layer=1)
        model = ConcurrentModel([a, b])
        model.link_entangled(("A", "A_root"), ("B", "B_leaf"))
        with pytest.raises(ModelError, match="cycle"):
            model.link_entangled(("B", "B_root"), ("A", "A_leaf"))

    def test_same_graph_rejected(self):
        a = simple_chain("A")
        b = simple_chain("B", layer=1)
        model = ConcurrentModel([a, b])
        with pytest.raises(ModelError, match="differ"):
            model.link_entangled(("A", "A_root"), ("A", "A_leaf"))


class TestPropagateEntanglement:
    def test_delivery_unlocks_inspection_side(self):
        scenario = load_bundled("defect_inspection")
        model = scenario.model
        states = initialize_episodes(model)
        ep1, ep2 = states["G1"], states["G2"]
        assert not ep2.is_met("new_object")
        # Drive the supply line to its root.
        for arc in (
            "h_reach_object",
            "h_pick_object",
            "h_carry_to_human",
            "h_announce_pickup",
            "h_handover",
            "h_place_on_table",
        ):
            child = next(iter(model.graph("G1").arc(arc).children))
            if ep1.is_node_feasible(child):
                ep1.meet_node(child)
            for a in model.graph("G1").arc(arc).actions:
                ep1.record_action_done(arc, a.id)
        ep1.meet_node("obj_on_table")
        cascade = propagate_entanglement(model, states, ("G1", "obj_on_table"))
        assert cascade == [("G2", "new_object")]
        assert ep2.is_met("new_object")
        assert ep2.is_arc_feasible("h_grasp_object")

    def test_idempotent_redelivery(self):
        model = ConcurrentModel([simple_chain("A"), simple_chain("B", layer=1)])
        model.link_entangled(("A", "A_root"), ("B", "B_leaf"))
        states = initialize_episodes(model)
        states["A"].meet_node("A_leaf")
        states["A"].record_action_done("A_h", "A_a")
        states["A"].meet_node("A_root")
        first = propagate_entanglement(model, states, ("A", "A_root"))
        again = propagate_entanglement(model, states, ("A", "A_root"))
        assert first == [("B", "B_leaf")]
        assert again == []

    def test_three_graph_cascade_equals_one_link_at_a_time(self):
        def build():
            a = simple_chain("A")
            b = simple_chain("B", layer=1)
            c = simple_chain("C", layer=2)
            model = ConcurrentModel([a, b, c])
            model.link_entangled(("A", "A_root"), ("B", "B_leaf"))
            model.link_entangled(("B", "B_leaf"), ("C", "C_leaf"))
            states = initialize_episodes(model)
            states["A"].meet_node("A_leaf")
            states["A"].record_action_done("A_h", "A_a")
            states["A"].meet_node("A_root")
            return model, states

        model1, states1 = build()
        cascade = propagate_entanglement(model1, states1, ("A", "A_root"))
        assert cascade == [("B", "B_leaf"), ("C", "C_leaf")]

        model2, states2 = build()
        states2["B"].mirror_met("B_leaf")
        states2["C"].mirror_met("C_leaf")
        for g in ("A", "B", "C"):
            assert states1[g].flags() == states2[g].flags()

    def test_biconditional_holds_after_random_transactions(self):
        rng = random.Random(5)
        for _ in range(25):
            graphs = [
                rand_graph(rng, max_nodes=8, max_arcs=5, graph_id=f"M{i}", layer=i)
                for i in range(rng.randint(2, 3))
            ]
            model = ConcurrentModel(graphs)
            for i in range(1, len(graphs)):
                dep = graphs[i]
                src = graphs[rng.randrange(i)]
                dep_leaf = sorted(dep.leaves)[0]
                src_node = sorted(n.id for n in src.nodes)[0]
                model.link_entangled((src.id, src_node), (dep.id, dep_leaf))
            states = initialize_episodes(model)

            def check():
                for link in model.entanglements:
                    assert states[link.source_graph].is_met(
                        link.source_node
                    ) == states[link.dependent_graph].is_met(link.dependent_node)

            check()
            drive_model(model, states, rng, check=check)


class TestModelValidation:
    def test_layer_order_enforced(self):
        a = simple_chain("A", layer=1)
        b = simple_chain("B", layer=0)
        model = ConcurrentModel([a, b], termination_graph="A")
        assert any("layering" in p for p in model.validate())

    def test_unique_top_layer_required(self):
        a = simple_chain("A", layer=1)
        b = simple_chain("B", layer=1)
        model = ConcurrentModel([a, b], termination_graph="B")
        assert any("termination graph" in p for p in model.validate())

    def test_ambiguous_termination_rejected(self):
        a = simple_chain("A", layer=0)
        b = simple_chain("B", layer=0)
        with pytest.raises(ModelError, match="ambiguous"):
            ConcurrentModel([a, b])
