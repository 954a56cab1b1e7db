"""Play the operator against a stepped session, no browser required.

Creates a session (robot agents simulated, human actions awaiting input),
then alternates between advancing simulated time and performing whatever
the planner currently asks of the operator, including one deliberately
missed gesture and one premature gesture that the service rejects.

Run: python demos/05_operator_session.py
"""

from andorplan.service import SessionManager


def main():
    manager = SessionManager()
    session = manager.create(bundled="defect_inspection", seed=7)
    print(f"session {session.id} created; gestures: {sorted(session.scenario.gestures)}")

    # Too early: nothing feasible matches a put-down yet.
    entry = session.submit("gesture", {"gesture": "put-down"})
    print(f"premature put-down -> accepted={entry.accepted} ({entry.reason})")

    missed_once = False
    for step in range(400):
        snap = session.snapshot()
        if snap["done"]:
            break
        acted = False
        for sug in snap["suggestions"]:
            if snap["agents"][sug["agent"]]["class"] != "human-operator":
                continue
            if not missed_once and sug["action"] == "announce_pickup":
                # Exercise the drop-and-repeat path once.
                session.submit("gesture", {"gesture": "pick-up", "miss": True})
                print(f"t={snap['time']:7.1f}  gesture missed (recognition dropped it)")
                missed_once = True
            entry = session.submit(
                "action-done",
                {
                    "graph": sug["graph"],
                    "hyper_arc": sug["hyper_arc"],
                    "action": sug["action"],
                    "agent": sug["agent"],
                },
            )
            print(
                f"t={snap['time']:7.1f}  operator did {sug['action']:<16} "
                f"({sug['graph']}:{sug['hyper_arc']}) accepted={entry.accepted}"
            )
            acted = True
        if not acted:
            session.advance(5.0)

    snap = session.snapshot()
    print(f"\ndone={snap['done']} at t={snap['time']:.1f}")
    for g, info in snap["graphs"].items():
        print(f"  {g}: {info['status']} rounds {info['rounds_done']}/{info['rounds_total']}")
    print(f"log entries: {len(session.export_log())} (replayable)")


if __name__ == "__main__":
    main()
