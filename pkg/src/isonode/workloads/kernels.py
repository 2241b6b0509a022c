"""Event-loop kernel for the per-core FIFO queueing simulation.

The advance loop is written as a plain function over flat numpy arrays so it
can be compiled with numba where available. Backend selection:

    RFM_KERNEL=auto    compile when numba imports cleanly (default)
    RFM_KERNEL=numba   require numba, fail loudly if missing
    RFM_KERNEL=python  force the pure-Python fallback

State layout (one simulation):
    busy_until[s]  completion time of the request in service on slot s (inf idle)
    serving[s]     request index in service on slot s (-1 idle)
    q_head/q_tail  per-slot FIFO of waiting request indices, linked by q_next
    qlen[s]        assigned-but-not-completed count (dispatch key)
    comp_t[r]      completion time per request (nan until done)
    comp_order[k]  request indices in completion order
    cursor         int64[2]: next arrival index, completed count
"""

from __future__ import annotations

import os

import numpy as np

INF = np.inf


def _advance(
    t_limit,
    k_active,
    max_cores,
    n,
    arr_t,
    svc,
    alpha,
    ext_n,
    busy_until,
    serving,
    q_head,
    q_tail,
    qlen,
    q_next,
    comp_t,
    comp_order,
    cursor,
):
    """Run the event loop up to and including virtual time t_limit.

    Completions fire before arrivals at equal times; ties pick the lowest
    slot. Arrivals dispatch to the shortest queue among slots < k_active;
    completions are honored on every slot so a retiring core can drain.
    """
    i_next = cursor[0]
    n_done = cursor[1]
    while True:
        tc = INF
        sc = -1
        for s in range(max_cores):
            if serving[s] >= 0 and busy_until[s] < tc:
                tc = busy_until[s]
                sc = s
        ta = arr_t[i_next] if i_next < n else INF
        if tc == INF and ta == INF:
            break
        if tc > t_limit and ta > t_limit:
            break
        if tc <= ta:
            req = serving[sc]
            comp_t[req] = tc
            comp_order[n_done] = req
            n_done += 1
            serving[sc] = -1
            busy_until[sc] = INF
            qlen[sc] -= 1
            if sc < k_active and q_head[sc] >= 0:
                nxt = q_head[sc]
                q_head[sc] = q_next[nxt]
                if q_head[sc] < 0:
                    q_tail[sc] = -1
                nbusy = 0
                for s in range(max_cores):
                    if serving[s] >= 0:
                        nbusy += 1
                slow = 1.0 + alpha * max(0.0, nbusy + ext_n)
                serving[sc] = nxt
                busy_until[sc] = tc + svc[nxt] * slow
        else:
            best = 0
            bq = qlen[0]
            for s in range(1, k_active):
                if qlen[s] < bq:
                    bq = qlen[s]
                    best = s
            qlen[best] += 1
            if serving[best] < 0:
                nbusy = 0
                for s in range(max_cores):
                    if serving[s] >= 0:
                        nbusy += 1
                slow = 1.0 + alpha * max(0.0, nbusy + ext_n)
                serving[best] = i_next
                busy_until[best] = ta + svc[i_next] * slow
            else:
                if q_tail[best] >= 0:
                    q_next[q_tail[best]] = i_next
                else:
                    q_head[best] = i_next
                q_tail[best] = i_next
                q_next[i_next] = -1
            i_next += 1
    cursor[0] = i_next
    cursor[1] = n_done


def _select_backend():
    choice = os.environ.get("RFM_KERNEL", "auto").lower()
    if choice not in ("auto", "numba", "python"):
        raise ValueError(f"RFM_KERNEL must be auto, numba, or python, got {choice!r}")
    if choice == "python":
        return _advance, "python"
    try:
        from numba import njit
    except ImportError:
        if choice == "numba":
            raise
        return _advance, "python"
    return njit(cache=True)(_advance), "numba"


advance_queue, BACKEND = _select_backend()
