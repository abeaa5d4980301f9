"""Exact s-t max-flow / min-cut on capacitated graphs.

The solver is Boykov-Kolmogorov.  A compiled kernel (``_bk``) is used when it
was built; otherwise the pure-Python twin in ``_bk_py`` runs.  ``BACKEND``
names the one selected at import time, and ``TIMELINEKIT_PURE_PYTHON=1``
forces the fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _bk_py

try:
    if os.environ.get("TIMELINEKIT_PURE_PYTHON"):
        raise ImportError("pure-Python backend requested")
    from . import _bk as _compiled
except ImportError:
    _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


class FlowNetwork:
    """Inner nodes ``0..n-1`` plus an implicit source and sink.

    Terminal links carry the data terms, neighbor links the smoothness terms.
    Each :meth:`add_edges` call adds arcs ``u->v`` with capacity ``cap`` and
    ``v->u`` with ``rev_cap``.
    """

    def __init__(self, n_nodes: int):
        self.n_nodes = int(n_nodes)
        self.source_cap = np.zeros(self.n_nodes)
        self.sink_cap = np.zeros(self.n_nodes)
        self._us: list[np.ndarray] = []
        self._vs: list[np.ndarray] = []
        self._caps: list[np.ndarray] = []
        self._rcaps: list[np.ndarray] = []
        self.constant = 0.0

    @classmethod
    def from_digraph(cls, n: int, source: int, sink: int, edges) -> tuple["FlowNetwork", list[int]]:
        """Build from an explicit digraph; returns the network and inner-node ids.

        ``edges`` are ``(u, v, capacity)`` over nodes ``0..n-1``.  Arcs into the
        source or out of the sink can never carry s-t flow and are dropped.
        """
        inner = [v for v in range(n) if v not in (source, sink)]
        index = {v: k for k, v in enumerate(inner)}
        net = cls(len(inner))
        us, vs, caps = [], [], []
        for u, v, c in edges:
            if c < 0:
                raise ValueError("capacities must be non-negative")
            if u == v or v == source or u == sink:
                continue
            if u == source and v == sink:
                net.constant += c
            elif u == source:
                net.source_cap[index[v]] += c
            elif v == sink:
                net.sink_cap[index[u]] += c
            else:
                us.append(index[u])
                vs.append(index[v])
                caps.append(c)
        if us:
            net.add_edges(us, vs, caps, np.zeros(len(us)))
        return net, inner

    def add_tedges(self, nodes, cap_source, cap_sink) -> None:
        nodes = np.asarray(nodes, dtype=np.int64)
        cs = np.broadcast_to(np.asarray(cap_source, dtype=float), nodes.shape)
        ct = np.broadcast_to(np.asarray(cap_sink, dtype=float), nodes.shape)
        if (cs < 0).any() or (ct < 0).any():
            raise ValueError("terminal capacities must be non-negative")
        np.add.at(self.source_cap, nodes, cs)
        np.add.at(self.sink_cap, nodes, ct)

    def add_edges(self, us, vs, caps, rev_caps) -> None:
        us, vs, caps, rev_caps = np.broadcast_arrays(
            np.asarray(us, dtype=np.int64),
            np.asarray(vs, dtype=np.int64),
            np.asarray(caps, dtype=float),
            np.asarray(rev_caps, dtype=float),
        )
        us, vs, caps, rev_caps = (np.ravel(x).copy() for x in (us, vs, caps, rev_caps))
        if (caps < 0).any() or (rev_caps < 0).any():
            raise ValueError("capacities must be non-negative")
        if us.size and (min(us.min(), vs.min()) < 0 or max(us.max(), vs.max()) >= self.n_nodes):
            raise IndexError("edge endpoint out of range")
        self._us.append(us)
        self._vs.append(vs)
        self._caps.append(caps)
        self._rcaps.append(rev_caps)

    def _edge_arrays(self):
        if not self._us:
            empty = np.zeros(0)
            return empty.astype(np.int64), empty.astype(np.int64), empty, empty
        return (
            np.concatenate(self._us),
            np.concatenate(self._vs),
            np.concatenate(self._caps),
            np.concatenate(self._rcaps),
        )

    def _arrays(self):
        """CSR arrays for the kernels: arcs grouped by tail, sister indices remapped."""
        us, vs, caps, rcaps = self._edge_arrays()
        m = us.size
        tails = np.empty(2 * m, dtype=np.int64)
        heads = np.empty(2 * m, dtype=np.int64)
        r_cap = np.empty(2 * m)
        tails[0::2], tails[1::2] = us, vs
        heads[0::2], heads[1::2] = vs, us
        r_cap[0::2], r_cap[1::2] = caps, rcaps
        order = np.argsort(tails, kind="stable")
        inverse = np.empty_like(order)
        inverse[order] = np.arange(order.size)
        sisters = inverse[order ^ 1]
        first = np.zeros(self.n_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(tails, minlength=self.n_nodes), out=first[1:])
        tr_cap = self.source_cap - self.sink_cap
        flow0 = float(np.minimum(self.source_cap, self.sink_cap).sum()) + self.constant
        return first, heads[order], sisters.astype(np.int64), r_cap[order], tr_cap, flow0

    def cut_capacity(self, source_side: np.ndarray) -> float:
        """Capacity of the s-t cut whose source side is ``source_side`` (inner nodes)."""
        s = np.asarray(source_side, dtype=bool)
        us, vs, caps, rcaps = self._edge_arrays()
        total = self.constant
        total += float(self.sink_cap[s].sum()) + float(self.source_cap[~s].sum())
        if us.size:
            total += float(caps[s[us] & ~s[vs]].sum()) + float(rcaps[s[vs] & ~s[us]].sum())
        return total

    def solve(self, backend: str | None = None) -> tuple[np.ndarray, float]:
        return max_flow(self, backend)


def max_flow(net: FlowNetwork, backend: str | None = None) -> tuple[np.ndarray, float]:
    """Exact max-flow value and a minimum cut as a boolean source-side mask.

    The returned cut's capacity is checked against the flow value on every call.
    """
    backend = backend or BACKEND
    first, heads, sisters, r_cap, tr_cap, flow0 = net._arrays()
    if backend == "cython":
        if _compiled is None:
            raise RuntimeError("compiled max-flow kernel is not available")
        flow, side = _compiled.solve(first, heads, sisters, r_cap, tr_cap, flow0)
        side = np.asarray(side, dtype=bool)
    elif backend == "python":
        flow, side = _bk_py.solve(first, heads, sisters, r_cap, tr_cap, flow0)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    cut = net.cut_capacity(side)
    scale = max(1.0, abs(cut), abs(flow))
    if abs(cut - flow) > 1e-9 * scale:
        raise AssertionError(f"max-flow {flow} does not match cut capacity {cut}")
    return side, float(flow)
