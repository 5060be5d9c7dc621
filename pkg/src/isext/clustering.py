"""Common-operation clustering: clone shared operations into their users.

A cluster ``i`` whose every user cluster can legally absorb it is merged
into each of them and disappears; the value it computed is recomputed
inside every user.  Passes repeat until nothing changes.
"""

from __future__ import annotations

import logging
from typing import Iterator

import numpy as np

from .ddg import DDG, apply_op, apply_op_np, eval_nodes
from .miso import ArchConstraints, Cluster, ClusterGraph, is_legal_miso, make_cluster, cluster_inputs

log = logging.getLogger(__name__)


def singleton_clusters(g: DDG, ac: ArchConstraints | None = None) -> ClusterGraph:
    """One cluster per operation node that is a legal singleton under ``ac``."""
    ac = ac or ArchConstraints()
    clusters = {}
    for nid in g.ops():
        if is_legal_miso(g, {nid}, ac):
            clusters[nid] = Cluster(nid, frozenset({nid}), tuple(cluster_inputs(g, {nid})))
    return ClusterGraph(g, clusters)


def cluster_users(cg: ClusterGraph, i: str, clusters=None) -> list[str]:
    clusters = cg.clusters if clusters is None else clusters
    return sorted(r for r, c in clusters.items() if r != i and i in c.inputs)


def external_users(cg: ClusterGraph, i: str, covered=None) -> list[str]:
    """Consumers of ``i``'s value that cannot absorb it.

    These are declared outputs and uncovered (base-instruction) nodes.  A
    cluster with no users at all also feeds the virtual sink.
    """
    g = cg.ddg
    covered = cg.covered() if covered is None else covered
    out = []
    if i in g.outputs:
        out.append("<output>")
    out += [u for u in g._uses[i] if u not in covered]
    return out


def combine_subgraphs(cg: ClusterGraph, u, i) -> Cluster:
    """Cluster rooted at ``u`` holding both bodies; ``i`` becomes internal."""
    cu = cg.clusters[u] if isinstance(u, str) else u
    ci = cg.clusters[i] if isinstance(i, str) else i
    if ci.root not in cu.inputs:
        raise ValueError(f"cluster {cu.root!r} does not use {ci.root!r}")
    members = cu.members | ci.members
    return Cluster(cu.root, members, tuple(cluster_inputs(cg.ddg, members)))


def can_combine(cg: ClusterGraph, u, i, ac: ArchConstraints) -> bool:
    cu = cg.clusters[u] if isinstance(u, str) else u
    ci = cg.clusters[i] if isinstance(i, str) else i
    if ci.root not in cu.inputs:
        raise ValueError(f"cluster {cu.root!r} does not use {ci.root!r}")
    return is_legal_miso(cg.ddg, cu.members | ci.members, ac, shared=True)


def combine_pass(cg: ClusterGraph, ac: ArchConstraints) -> ClusterGraph:
    current = dict(cg.clusters)
    result: dict[str, Cluster] = {}
    marked: set[str] = set()
    covered = cg.covered()
    for c in cg.ordered():
        i = c.root
        if i in marked:
            continue
        users = cluster_users(cg, i, current)
        blocked = not users or external_users(cg, i, covered)
        if not blocked and all(can_combine(cg, current[u], c, ac) for u in users):
            for u in users:
                current[u] = result[u] = combine_subgraphs(cg, current[u], c)
                marked.add(u)
            del current[i]
            log.debug("cloned %s into %s", i, users)
        else:
            result[i] = c
    return ClusterGraph(cg.ddg, result)


def iterate_combine(cg: ClusterGraph, ac: ArchConstraints) -> Iterator[ClusterGraph]:
    """Yield the result of each pass until a fixpoint; the last one is it."""
    g = ClusterGraph(cg.ddg, {r: make_cluster(cg.ddg, c.members) for r, c in cg.clusters.items()})
    while True:
        nxt = combine_pass(g, ac)
        yield nxt
        if nxt.same_as(g):
            return
        g = nxt


def clone_and_combine(cg: ClusterGraph, ac: ArchConstraints) -> ClusterGraph:
    for g in iterate_combine(cg, ac):
        pass
    return g


def eval_cover(cg: ClusterGraph, env, mem=None) -> dict:
    """Evaluate ``cg``'s DDG outputs cluster by cluster.

    Each cluster is computed as a unit from its inputs only; uncovered nodes
    run as base instructions.  Raises if some needed value is never produced.
    """
    g = cg.ddg
    vector = any(isinstance(v, np.ndarray) for v in env.values())
    covered = cg.covered()
    producers = {}
    for c in cg.clusters.values():
        producers[c.root] = c
    for nid in cg.uncovered():
        producers[nid] = None
    vals = eval_nodes(g, env, mem, only={i for i in g.nodes if not g.nodes[i].is_op})

    def need(v):
        if v not in vals:
            raise ValueError(f"value {v!r} is not produced by the covering")
        return vals[v]

    apply = apply_op_np if vector else apply_op
    for nid in g._order:
        if nid not in producers:
            continue
        c = producers[nid]
        if c is None:
            n = g.nodes[nid]
            args = [need(o) for o in n.operands]
            if n.kind == "load":
                if mem is None:
                    raise ValueError("load without memory oracle")
                vals[nid] = mem(args[0]) if vector else mem(args[0]) & g.mask
            else:
                vals[nid] = apply(n.kind, args, g.width)
            continue
        local = {v: need(v) for v in c.inputs}
        for m in g._order:
            if m not in c.members:
                continue
            n = g.nodes[m]
            args = [local[o] if o in local else vals[o] for o in n.operands]
            local[m] = apply(n.kind, args, g.width)
        vals[nid] = local[nid]
    out = {}
    for o in g.outputs:
        if o in covered and o not in producers:
            raise ValueError(f"output {o!r} is only computed inside a cluster")
        out[o] = need(o)
    return out
