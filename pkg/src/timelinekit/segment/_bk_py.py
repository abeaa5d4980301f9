"""Pure-Python Boykov-Kolmogorov max-flow, the fallback for the compiled kernel.

Both backends take the same CSR-style arrays built by
:func:`timelinekit.segment.maxflow.FlowNetwork._arrays` and return
``(flow, source_side)``.  Keep the two in lockstep.
"""
from collections import deque

import numpy as np

NONE = -1
TERMINAL = -2
ORPHAN = -3
INF_D = 1 << 30


def solve(first, heads, sisters, r_cap, tr_cap, flow0):
    """Run the augmenting-tree search on residual arrays (modified in place copies).

    ``first`` has n+1 entries; arcs of node i are ``first[i]:first[i+1]``.
    ``tr_cap[i] > 0`` is residual capacity source->i, ``< 0`` is i->sink.
    """
    n = len(first) - 1
    first = [int(v) for v in first]
    heads = [int(v) for v in heads]
    sisters = [int(v) for v in sisters]
    r_cap = [float(v) for v in r_cap]
    tr_cap = [float(v) for v in tr_cap]
    flow = float(flow0)

    parent = [NONE] * n
    is_sink = [False] * n
    ts = [0] * n
    dist = [0] * n
    in_queue = [False] * n
    active = deque()
    orphans = deque()
    time = 0

    def set_active(i):
        if not in_queue[i]:
            in_queue[i] = True
            active.append(i)

    for i in range(n):
        if tr_cap[i] > 0:
            is_sink[i] = False
            parent[i] = TERMINAL
            dist[i] = 1
            set_active(i)
        elif tr_cap[i] < 0:
            is_sink[i] = True
            parent[i] = TERMINAL
            dist[i] = 1
            set_active(i)

    def tail_of(a):
        return heads[sisters[a]]

    current = NONE
    while True:
        i = NONE
        if current != NONE and parent[current] != NONE:
            i = current
        current = NONE
        if i == NONE:
            while active:
                j = active.popleft()
                in_queue[j] = False
                if parent[j] != NONE:
                    i = j
                    break
            if i == NONE:
                break

        # growth
        middle = NONE
        if not is_sink[i]:
            for a in range(first[i], first[i + 1]):
                if r_cap[a] > 0:
                    j = heads[a]
                    pj = parent[j]
                    if pj == NONE:
                        is_sink[j] = False
                        parent[j] = sisters[a]
                        ts[j] = ts[i]
                        dist[j] = dist[i] + 1
                        set_active(j)
                    elif is_sink[j]:
                        middle = a
                        break
                    elif ts[j] <= ts[i] and dist[j] > dist[i]:
                        parent[j] = sisters[a]
                        ts[j] = ts[i]
                        dist[j] = dist[i] + 1
        else:
            for a in range(first[i], first[i + 1]):
                if r_cap[sisters[a]] > 0:
                    j = heads[a]
                    pj = parent[j]
                    if pj == NONE:
                        is_sink[j] = True
                        parent[j] = sisters[a]
                        ts[j] = ts[i]
                        dist[j] = dist[i] + 1
                        set_active(j)
                    elif not is_sink[j]:
                        middle = sisters[a]
                        break
                    elif ts[j] <= ts[i] and dist[j] > dist[i]:
                        parent[j] = sisters[a]
                        ts[j] = ts[i]
                        dist[j] = dist[i] + 1

        time += 1
        if middle == NONE:
            continue
        current = i

        # augment along source tree -> middle arc -> sink tree
        bottleneck = r_cap[middle]
        k = tail_of(middle)
        while parent[k] != TERMINAL:
            a = parent[k]
            c = r_cap[sisters[a]]
            if c < bottleneck:
                bottleneck = c
            k = heads[a]
        if tr_cap[k] < bottleneck:
            bottleneck = tr_cap[k]
        k = heads[middle]
        while parent[k] != TERMINAL:
            a = parent[k]
            c = r_cap[a]
            if c < bottleneck:
                bottleneck = c
            k = heads[a]
        if -tr_cap[k] < bottleneck:
            bottleneck = -tr_cap[k]

        r_cap[sisters[middle]] += bottleneck
        r_cap[middle] -= bottleneck
        k = tail_of(middle)
        while parent[k] != TERMINAL:
            a = parent[k]
            r_cap[a] += bottleneck
            r_cap[sisters[a]] -= bottleneck
            nxt = heads[a]
            if r_cap[sisters[a]] == 0:
                parent[k] = ORPHAN
                orphans.appendleft(k)
            k = nxt
        tr_cap[k] -= bottleneck
        if tr_cap[k] == 0:
            parent[k] = ORPHAN
            orphans.appendleft(k)
        k = heads[middle]
        while parent[k] != TERMINAL:
            a = parent[k]
            r_cap[sisters[a]] += bottleneck
            r_cap[a] -= bottleneck
            nxt = heads[a]
            if r_cap[a] == 0:
                parent[k] = ORPHAN
                orphans.appendleft(k)
            k = nxt
        tr_cap[k] += bottleneck
        if tr_cap[k] == 0:
            parent[k] = ORPHAN
            orphans.appendleft(k)
        flow += bottleneck

        # adoption
        while orphans:
            o = orphans.popleft()
            sink_side = is_sink[o]
            d_min = INF_D
            best = NONE
            for a0 in range(first[o], first[o + 1]):
                cap = r_cap[a0] if sink_side else r_cap[sisters[a0]]
                if cap <= 0:
                    continue
                j = heads[a0]
                if is_sink[j] != sink_side or parent[j] == NONE:
                    continue
                d = 0
                while True:
                    if ts[j] == time:
                        d += dist[j]
                        break
                    a = parent[j]
                    d += 1
                    if a == TERMINAL:
                        ts[j] = time
                        dist[j] = 1
                        break
                    if a == ORPHAN:
                        d = INF_D
                        break
                    j = heads[a]
                if d < INF_D:
                    if d < d_min:
                        best = a0
                        d_min = d
                    j = heads[a0]
                    while ts[j] != time:
                        ts[j] = time
                        dist[j] = d
                        d -= 1
                        j = heads[parent[j]]
            if best != NONE:
                parent[o] = best
                ts[o] = time
                dist[o] = d_min + 1
                continue
            parent[o] = NONE
            for a0 in range(first[o], first[o + 1]):
                j = heads[a0]
                if is_sink[j] != sink_side:
                    continue
                pj = parent[j]
                if pj == NONE:
                    continue
                cap = r_cap[a0] if sink_side else r_cap[sisters[a0]]
                if cap > 0:
                    set_active(j)
                if pj != TERMINAL and pj != ORPHAN and heads[pj] == o:
                    parent[j] = ORPHAN
                    orphans.append(j)

    source_side = np.zeros(n, dtype=bool)
    for i in range(n):
        source_side[i] = parent[i] != NONE and not is_sink[i]
    return flow, source_side
