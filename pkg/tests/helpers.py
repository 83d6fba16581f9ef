"""Independent replay of an event trace, used to check engine invariants."""


def replay(trace):
    """Walk a trace and assert the scale-per-request rules; returns counters."""
    created = {}
    busy, idle = set(), set()
    last = float("-inf")
    checked_routes = 0
    for t, kind, iid in trace:
        assert t >= last, f"time went backwards at {t}"
        last = t
        if kind == "arrival-cold":
            assert iid not in created
            created[iid] = t
            busy.add(iid)
        elif kind == "arrival-warm":
            assert iid in idle, f"warm start on non-idle instance {iid} at {t}"
            if len(idle) >= 2:
                assert created[iid] == max(created[j] for j in idle), f"not newest-first at {t}"
                checked_routes += 1
            idle.remove(iid)
            busy.add(iid)
        elif kind == "arrival-rejected":
            assert iid == -1
        elif kind == "departure":
            assert iid in busy, f"departure of non-busy instance {iid} at {t}"
            busy.remove(iid)
            idle.add(iid)
        elif kind == "expiration":
            assert iid in idle
            idle.remove(iid)
        else:
            raise AssertionError(f"unknown kind {kind}")
    return {"checked_routes": checked_routes, "instances": len(created)}
