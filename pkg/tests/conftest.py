"""Shared fixtures: random graph corpus, independent oracles, episode drivers.

The oracles here deliberately re-derive everything from first principles
(set comprehensions over the event log, subset enumeration over arcs) so
they share no code path with the incremental implementations they check.
"""

from __future__ import annotations

import random

from andorplan.episode import Episode, EpisodeStatus
from andorplan.graph import Action, GraphStructure, HyperArc, Node, validate_structure


def rand_graph(
    rng: random.Random,
    max_nodes: int = 12,
    max_arcs: int = 8,
    graph_id: str = "G",
    layer: int = 0,
    agent: str = "a1",
    min_nodes: int = 1,
    min_arcs: int = 0,
) -> GraphStructure:
    """A random valid AND/OR graph (acyclic by construction, pruned connected)."""
    n_nodes = rng.randint(min_nodes, max_nodes)
    ids = [f"{graph_id}n{i}" for i in range(n_nodes)]
    root = ids[-1]

    # Grow arcs downward from the root so most of the graph stays reachable
    # (children always have a smaller index than their parent: acyclic).
    reachable_parents = [n_nodes - 1]
    arcs = []
    for k in range(rng.randint(min_arcs, max_arcs)):
        candidates = [i for i in reachable_parents if i > 0]
        if not candidates:
            break
        parent_idx = rng.choice(candidates)
        pool = ids[:parent_idx]
        children = frozenset(rng.sample(pool, rng.randint(1, min(3, len(pool)))))
        reachable_parents.extend(ids.index(c) for c in sorted(children))
        actions = tuple(
            Action(
                id=f"{graph_id}h{k}a{j}",
                label="act",
                eligible_agents=frozenset({agent}),
                duration_mean=float(rng.randint(1, 5)),
            )
            for j in range(rng.randint(1, 2))
        )
        arcs.append(
            HyperArc(
                id=f"{graph_id}h{k}",
                children=children,
                parent=ids[parent_idx],
                actions=actions,
                cost=float(rng.randint(1, 9)),
            )
        )

    # Prune to the part reachable from the root.
    arcs_into: dict[str, list[HyperArc]] = {}
    for h in arcs:
        arcs_into.setdefault(h.parent, []).append(h)
    reachable = set()
    stack = [root]
    while stack:
        n = stack.pop()
        if n in reachable:
            continue
        reachable.add(n)
        for h in arcs_into.get(n, ()):
            stack.extend(h.children)
    kept_arcs = tuple(
        sorted((h for h in arcs if h.parent in reachable), key=lambda h: h.id)
    )
    kept_nodes = tuple(Node(i) for i in ids if i in reachable)
    g = GraphStructure(
        id=graph_id, nodes=kept_nodes, hyper_arcs=kept_arcs, root=root, layer=layer
    )
    assert validate_structure(g) == [], validate_structure(g)
    return g


# -- independent flag oracle ------------------------------------------------


def derive_flags(graph: GraphStructure, log: list[tuple]) -> dict:
    """Recompute every episode flag directly from the event log.

    Works purely from the feasibility/solved definitions, with suppression
    in closed form: an arc is suppressed iff some *other* solved arc shares
    a child with it.
    """
    assert log and log[0][0] == "init"
    initially_met, gated = set(log[0][1]), set(log[0][2])
    met = set(initially_met)
    done = {h.id: 0 for h in graph.hyper_arcs}
    solved: set[str] = set()
    for entry in log[1:]:
        kind = entry[0]
        if kind in ("meet", "mirror"):
            met.add(entry[1])
        elif kind == "action":
            done[entry[1]] += 1
            if done[entry[1]] == len(graph.arc(entry[1]).actions):
                solved.add(entry[1])
        elif kind == "solve":
            solved.add(entry[1])

    suppressed = {
        h.id
        for h in graph.hyper_arcs
        if h.id not in solved
        and any(
            other.id != h.id and other.children & h.children
            for other in graph.hyper_arcs
            if other.id in solved
        )
    }
    feasible_nodes = {
        n.id
        for n in graph.nodes
        if n.id not in met
        and (
            (graph.is_leaf(n.id) and n.id not in gated)
            or any(h.id in solved for h in graph.arcs_into.get(n.id, ()))
        )
    }
    feasible_arcs = {
        h.id
        for h in graph.hyper_arcs
        if h.id not in solved
        and h.id not in suppressed
        and all(c in met for c in h.children)
    }
    if graph.root in met:
        status = "solved"
    elif not feasible_nodes and not feasible_arcs and gated <= met:
        status = "failed"
    else:
        status = "in-progress"
    return {
        "met": sorted(met),
        "feasible_nodes": sorted(feasible_nodes),
        "solved": sorted(solved),
        "suppressed": sorted(suppressed),
        "feasible_arcs": sorted(feasible_arcs),
        "done": {k: v for k, v in sorted(done.items()) if v},
        "status": status,
    }


def assert_matches_oracle(ep: Episode) -> None:
    derived = derive_flags(ep.graph, ep.log)
    actual = ep.flags()
    assert actual == derived, f"incremental {actual} != derived {derived}"


# -- random legal episode driver ---------------------------------------------


def legal_moves(ep: Episode) -> list[tuple]:
    nodes, arcs = ep.feasible_sets()
    moves: list[tuple] = [("meet", n) for n in sorted(nodes)]
    for h in sorted(arcs):
        nxt = ep.next_action(h)
        if nxt is not None:
            moves.append(("action", h, nxt))
    return moves


def drive_random(ep: Episode, rng: random.Random, max_steps: int = 200, check=None):
    """Apply random legal events until the episode terminates or stalls."""
    for _ in range(max_steps):
        if ep.status is not EpisodeStatus.IN_PROGRESS:
            break
        moves = legal_moves(ep)
        if not moves:
            break
        move = rng.choice(moves)
        if move[0] == "meet":
            ep.meet_node(move[1])
        else:
            ep.record_action_done(move[1], move[2])
        if check is not None:
            check(ep)
    return ep


# -- brute-force path oracle ----------------------------------------------------


def brute_force_paths(graph: GraphStructure, ep: Episode) -> list[tuple[float, tuple[str, ...]]]:
    """Every maximal alternative-free sub-hypergraph, by subset enumeration.

    An arc subset qualifies iff it is exactly the closure needed to carry
    the root down to met nodes or leaves, picks at most one arc per parent,
    and avoids suppressed arcs. Exponential, fine for <= 8 arcs.
    """
    if ep.status is not EpisodeStatus.IN_PROGRESS:
        return []
    arcs = [h for h in graph.hyper_arcs]
    results = []
    for mask in range(1 << len(arcs)):
        subset = {arcs[i].id for i in range(len(arcs)) if mask >> i & 1}
        if any(ep.is_suppressed(a) or a in ep.dead_backed for a in subset):
            continue
        by_parent: dict[str, list[str]] = {}
        for a in subset:
            by_parent.setdefault(graph.arc(a).parent, []).append(a)
        if any(len(v) > 1 for v in by_parent.values()):
            continue
        # Closure from the root: required nodes must be carried, and the
        # subset must contain nothing else.
        needed_arcs: set[str] = set()
        frontier = [graph.root]
        ok = True
        seen_nodes = set()
        while frontier and ok:
            n = frontier.pop()
            if n in seen_nodes:
                continue
            seen_nodes.add(n)
            if ep.is_met(n):
                continue
            if n in by_parent:
                arc_id = by_parent[n][0]
                needed_arcs.add(arc_id)
                frontier.extend(graph.arc(arc_id).children)
            elif graph.is_leaf(n):
                continue
            else:
                ok = False
        if not ok or needed_arcs != subset:
            continue
        cost = sum(graph.arc(a).cost for a in subset if not ep.is_solved(a))
        results.append((cost, tuple(sorted(subset))))
    results.sort()
    return results
