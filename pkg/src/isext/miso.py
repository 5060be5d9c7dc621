"""MISO clusters, architectural constraints and greedy MaxMISO extraction."""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

from .ddg import CONST, DDG, INPUT, is_convex


@dataclass(frozen=True)
class ArchConstraints:
    max_inputs: int = 6
    max_nodes: int | None = None
    forbidden_kinds: frozenset = frozenset({"load"})

    def __post_init__(self):
        if self.max_inputs < 1:
            raise ValueError("max_inputs must be >= 1")
        if self.max_nodes is not None and self.max_nodes < 1:
            raise ValueError("max_nodes must be >= 1")
        object.__setattr__(self, "forbidden_kinds", frozenset(self.forbidden_kinds))


@dataclass(frozen=True)
class Cluster:
    root: str
    members: frozenset
    inputs: tuple[str, ...]

    def __post_init__(self):
        if self.root not in self.members:
            raise ValueError(f"root {self.root!r} not among members")


@dataclass(frozen=True, eq=False)
class ClusterGraph:
    """A covering of ``ddg`` by clusters keyed by root id.

    Members may repeat across clusters once common operations are cloned.
    Op nodes in no cluster are executed as base instructions.
    """

    ddg: DDG
    clusters: Mapping[str, Cluster] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "clusters", MappingProxyType(dict(self.clusters)))

    @property
    def width(self):
        return self.ddg.width

    def __len__(self):
        return len(self.clusters)

    def __iter__(self):
        return iter(self.ordered())

    def __getitem__(self, root):
        return self.clusters[root]

    def ordered(self):
        """Clusters in topological order of the cluster graph."""
        pos = _positions(self.ddg)
        return [self.clusters[r] for r in sorted(self.clusters, key=pos.__getitem__)]

    def covered(self):
        out = set()
        for c in self.clusters.values():
            out |= c.members
        return out

    def uncovered(self):
        cov = self.covered()
        return [i for i in self.ddg.ops() if i not in cov]

    def signature(self):
        return {r: c.members for r, c in self.clusters.items()}

    def same_as(self, other: "ClusterGraph"):
        return self.signature() == other.signature()


def _positions(g: DDG):
    return {nid: k for k, nid in enumerate(g._order)}


def cluster_inputs(g: DDG, s) -> list[str]:
    """External non-constant operands of ``s`` in first-use topological order."""
    s = set(s)
    if not s:
        raise ValueError("empty cluster")
    for i in s:
        if i not in g.nodes:
            raise KeyError(f"unknown node id {i!r}")
    out = {}
    for nid in g._order:
        if nid not in s:
            continue
        for o in g.nodes[nid].operands:
            if o not in s and g.nodes[o].kind != CONST:
                out.setdefault(o, None)
    return list(out)


def cluster_root(g: DDG, s):
    """The unique member of ``s`` with no user inside ``s``, else None."""
    sinks = [i for i in s if not any(u in s for u in g._uses[i])]
    return sinks[0] if len(sinks) == 1 else None


def is_legal_miso(g: DDG, s, ac: ArchConstraints, *, shared=False) -> bool:
    """Synthesizability of ``s`` as one MISO instruction under ``ac``.

    With ``shared=True`` non-root members may also feed nodes outside ``s``
    (their values are recomputed inside the cluster and produced elsewhere);
    this is the legality notion used once common operations are cloned.
    """
    s = frozenset(s)
    if not s:
        raise ValueError("empty cluster")
    for i in s:
        if i not in g.nodes:
            raise KeyError(f"unknown node id {i!r}")
    for i in s:
        n = g.nodes[i]
        if n.kind in (INPUT, CONST) or n.kind in ac.forbidden_kinds:
            return False
    if ac.max_nodes is not None and len(s) > ac.max_nodes:
        return False
    root = cluster_root(g, s)
    if root is None:
        return False
    if not shared:
        outs = set(g.outputs)
        for i in s:
            if i == root:
                continue
            if i in outs or any(u not in s for u in g._uses[i]):
                return False
    if len(cluster_inputs(g, s)) > ac.max_inputs:
        return False
    return is_convex(g, s)


def make_cluster(g: DDG, s) -> Cluster:
    s = frozenset(s)
    root = cluster_root(g, s)
    if root is None:
        raise ValueError(f"cluster {sorted(s)} has no unique root")
    return Cluster(root, s, tuple(cluster_inputs(g, s)))


def max_miso(g: DDG, ac: ArchConstraints) -> ClusterGraph:
    """Greedy partition of ``g`` into maximal legal MISO clusters.

    Roots are taken in reverse topological order; each cluster repeatedly
    absorbs the latest predecessor whose uses all lie inside it, skipping
    absorptions that would break ``ac``.  Nodes that cannot form even a
    legal singleton stay uncovered.
    """
    pos = _positions(g)
    outs = set(g.outputs)
    assigned: set[str] = set()
    clusters = {}

    def absorbable(p):
        n = g.nodes[p]
        return n.is_op and n.kind not in ac.forbidden_kinds and p not in assigned and p not in outs

    for root in reversed(g._order):
        n = g.nodes[root]
        if not n.is_op or root in assigned or not is_legal_miso(g, {root}, ac):
            continue
        members = {root}
        grown = True
        while grown:
            grown = False
            preds = {o for m in members for o in g.nodes[m].operands} - members
            for p in sorted(preds, key=pos.__getitem__, reverse=True):
                if not absorbable(p) or not all(u in members for u in g._uses[p]):
                    continue
                if is_legal_miso(g, members | {p}, ac):
                    members.add(p)
                    grown = True
                    break
        assigned |= members
        clusters[root] = make_cluster(g, members)
    return ClusterGraph(g, clusters)
