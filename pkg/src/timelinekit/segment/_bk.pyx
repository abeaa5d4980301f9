# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Boykov-Kolmogorov max-flow kernel; mirrors ``_bk_py.solve``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef enum:
    NONE = -1
    TERMINAL = -2
    ORPHAN = -3
    INF_D = 1073741824


cdef class _Queue:
    # ring buffer holding node ids; capacity n is enough because a node is
    # queued at most once at a time
    cdef long[:] buf
    cdef long head, size, cap

    def __cinit__(self, long cap):
        self.cap = cap if cap > 0 else 1
        self.buf = np.empty(self.cap, dtype=np.int_)
        self.head = 0
        self.size = 0

    cdef inline void push_back(self, long v):
        self.buf[(self.head + self.size) % self.cap] = v
        self.size += 1

    cdef inline void push_front(self, long v):
        self.head = (self.head - 1 + self.cap) % self.cap
        self.buf[self.head] = v
        self.size += 1

    cdef inline long pop_front(self):
        cdef long v = self.buf[self.head]
        self.head = (self.head + 1) % self.cap
        self.size -= 1
        return v


def solve(first_in, heads_in, sisters_in, r_cap_in, tr_cap_in, double flow0):
    cdef long n = len(first_in) - 1
    cdef long[:] first = np.ascontiguousarray(first_in, dtype=np.int_)
    cdef long[:] heads = np.ascontiguousarray(heads_in, dtype=np.int_)
    cdef long[:] sisters = np.ascontiguousarray(sisters_in, dtype=np.int_)
    cdef double[:] r_cap = np.array(r_cap_in, dtype=np.float64)
    cdef double[:] tr_cap = np.array(tr_cap_in, dtype=np.float64)
    cdef double flow = flow0

    cdef long[:] parent = np.full(n, NONE, dtype=np.int_)
    cdef char[:] is_sink = np.zeros(n, dtype=np.int8)
    cdef long[:] ts = np.zeros(n, dtype=np.int_)
    cdef long[:] dist = np.zeros(n, dtype=np.int_)
    cdef char[:] in_queue = np.zeros(n, dtype=np.int8)
    # orphans can be queued at most once each, but a node may become an
    # orphan again after adoption, so the ring is sized n as well
    cdef _Queue active = _Queue(n)
    cdef _Queue orphans = _Queue(n)

    cdef long i, j, k, a, a0, middle, current, pj, best, nxt, o
    cdef long time = 0
    cdef long d, d_min
    cdef double bottleneck, c, cap
    cdef char sink_side

    for i in range(n):
        if tr_cap[i] > 0:
            is_sink[i] = 0
            parent[i] = TERMINAL
            dist[i] = 1
            in_queue[i] = 1
            active.push_back(i)
        elif tr_cap[i] < 0:
            is_sink[i] = 1
            parent[i] = TERMINAL
            dist[i] = 1
            in_queue[i] = 1
            active.push_back(i)

    current = NONE
    while True:
        i = NONE
        if current != NONE and parent[current] != NONE:
            i = current
        current = NONE
        if i == NONE:
            while active.size > 0:
                j = active.pop_front()
                in_queue[j] = 0
                if parent[j] != NONE:
                    i = j
                    break
            if i == NONE:
                break

        middle = NONE
        if not is_sink[i]:
            for a in range(first[i], first[i + 1]):
                if r_cap[a] > 0:
                    j = heads[a]
                    pj = parent[j]
                    if pj == NONE:
                        is_sink[j] = 0
                        parent[j] = sisters[a]
                        ts[j] = ts[i]
                        dist[j] = dist[i] + 1
                        if not in_queue[j]:
                            in_queue[j] = 1
                            active.push_back(j)
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
                        is_sink[j] = 1
                        parent[j] = sisters[a]
                        ts[j] = ts[i]
                        dist[j] = dist[i] + 1
                        if not in_queue[j]:
                            in_queue[j] = 1
                            active.push_back(j)
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

        bottleneck = r_cap[middle]
        k = heads[sisters[middle]]
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
        k = heads[sisters[middle]]
        while parent[k] != TERMINAL:
            a = parent[k]
            r_cap[a] += bottleneck
            r_cap[sisters[a]] -= bottleneck
            nxt = heads[a]
            if r_cap[sisters[a]] == 0:
                parent[k] = ORPHAN
                orphans.push_front(k)
            k = nxt
        tr_cap[k] -= bottleneck
        if tr_cap[k] == 0:
            parent[k] = ORPHAN
            orphans.push_front(k)
        k = heads[middle]
        while parent[k] != TERMINAL:
            a = parent[k]
            r_cap[sisters[a]] += bottleneck
            r_cap[a] -= bottleneck
            nxt = heads[a]
            if r_cap[a] == 0:
                parent[k] = ORPHAN
                orphans.push_front(k)
            k = nxt
        tr_cap[k] += bottleneck
        if tr_cap[k] == 0:
            parent[k] = ORPHAN
            orphans.push_front(k)
        flow += bottleneck

        while orphans.size > 0:
            o = orphans.pop_front()
            sink_side = is_sink[o]
            d_min = INF_D
            best = NONE
            for a0 in range(first[o], first[o + 1]):
                if sink_side:
                    cap = r_cap[a0]
                else:
                    cap = r_cap[sisters[a0]]
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
                if sink_side:
                    cap = r_cap[a0]
                else:
                    cap = r_cap[sisters[a0]]
                if cap > 0 and not in_queue[j]:
                    in_queue[j] = 1
                    active.push_back(j)
                if pj != TERMINAL and pj != ORPHAN and heads[pj] == o:
                    parent[j] = ORPHAN
                    orphans.push_back(j)

    side = np.zeros(n, dtype=np.bool_)
    cdef cnp.uint8_t[:] side_view = side.view(np.uint8)
    for i in range(n):
        side_view[i] = 1 if (parent[i] != NONE and not is_sink[i]) else 0
    return flow, side
