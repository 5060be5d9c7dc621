"""Candidate instructions: named pure functions over W-bit arguments.

A candidate is stored as a single-output DDG whose ``input`` nodes, in
declaration order, are the parameters.  Function files (``.fn``) hold one or
more candidates, each introduced by a ``function <name>`` line followed by
ordinary IR statements.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ddg import COMMUTATIVE, CONST, DDG, INPUT, DDGError, Node, build_ddg, eval_nodes, format_ddg, parse_ddg, retarget
from .miso import Cluster

SMT_OPS = {
    "add": "bvadd", "sub": "bvsub", "mul": "bvmul",
    "and": "bvand", "or": "bvor", "xor": "bvxor", "not": "bvnot",
    "shl": "bvshl", "shrl": "bvlshr", "shra": "bvashr",
}


@dataclass(frozen=True, eq=False)
class CandidateInstruction:
    name: str
    body: DDG

    def __post_init__(self):
        if len(self.body.outputs) != 1:
            raise ValueError(f"{self.name}: a candidate has exactly one result")
        bad = [n.id for n in self.body.nodes.values() if n.kind == "load"]
        if bad:
            raise ValueError(f"{self.name}: loads are not allowed in instructions ({bad[0]})")

    @property
    def arity(self):
        return len(self.params)

    @property
    def params(self):
        return self.body.inputs

    @property
    def width(self):
        return self.body.width

    @property
    def result(self):
        return self.body.outputs[0]

    def op_count(self):
        return sum(1 for n in self.body.nodes.values() if n.is_op)

    def __call__(self, *args):
        return eval_fn(self, args)

    def __repr__(self):
        return f"<{self.name}/{self.arity} w{self.width}>"


def cluster_to_function(g: DDG, c: Cluster, name: str) -> CandidateInstruction:
    """Lift cluster ``c`` of ``g`` into a function of its inputs."""
    nodes = [Node(i, INPUT) for i in c.inputs]
    seen = set(c.inputs)
    for nid in g._order:
        if nid not in c.members:
            continue
        n = g.nodes[nid]
        if n.kind == "load":
            raise ValueError(f"cluster {c.root!r} contains load {nid!r}")
        for o in n.operands:
            if o not in seen and o not in c.members:
                on = g.nodes[o]
                if on.kind != CONST:
                    raise ValueError(f"operand {o!r} of {nid!r} is neither member nor input")
                nodes.append(on)
                seen.add(o)
        nodes.append(n)
    return CandidateInstruction(name, build_ddg(nodes, [c.root], g.width, name))


def eval_fn(f: CandidateInstruction, args):
    """Apply ``f`` to ints, or to uint64 arrays (width <= 32) element-wise."""
    if len(args) != f.arity:
        raise ValueError(f"{f.name} takes {f.arity} argument(s), got {len(args)}")
    env = dict(zip(f.params, args))
    return eval_nodes(f.body, env)[f.result]


def retarget_fn(f: CandidateInstruction, width: int) -> CandidateInstruction:
    return CandidateInstruction(f.name, retarget(f.body, width))


# -- structural identity ------------------------------------------------------

def canonical_key(f: CandidateInstruction):
    """Hashable key equal for bodies that match up to commutative operand order."""
    pidx = {p: k for k, p in enumerate(f.params)}
    memo = {}
    g = f.body
    for nid in g._order:
        n = g.nodes[nid]
        if n.kind == INPUT:
            memo[nid] = ("x", pidx[nid])
        elif n.kind == CONST:
            memo[nid] = ("c", n.value)
        else:
            ops = [memo[o] for o in n.operands]
            if n.kind in COMMUTATIVE:
                ops.sort(key=repr)
            memo[nid] = (n.kind, *ops)
    return (g.width, f.arity, memo[f.result])


def dedupe_structural(cands):
    """Keep one candidate per structural class, named by the smallest name."""
    groups: dict = {}
    for f in cands:
        groups.setdefault(canonical_key(f), []).append(f)
    out = []
    for members in groups.values():
        out.append(min(members, key=lambda f: f.name))
    return out


def duplicates(cands):
    """Map each dropped name to the representative that replaced it."""
    rep = {}
    for f in cands:
        rep.setdefault(canonical_key(f), []).append(f.name)
    out = {}
    for names in rep.values():
        keep = min(names)
        out.update({n: keep for n in names if n != keep})
    return out


# -- SMT-LIB terms --------------------------------------------------------------

def bv_literal(value: int, width: int) -> str:
    if width % 4 == 0:
        return f"#x{value:0{width // 4}x}"
    return f"#b{value:0{width}b}"


def _rotate(kind, a, b, width):
    w = bv_literal(width, width) if width > 1 else None
    if w is None:
        return a
    r = f"(bvurem {b} {w})"
    if kind == "rotr":
        r = f"(bvurem (bvsub {w} {r}) {w})"
    return f"(bvor (bvshl {a} {r}) (bvlshr {a} (bvsub {w} {r})))"


def emit_term(f: CandidateInstruction, arg_terms) -> str:
    """SMT-LIB2 QF_BV term for ``f`` applied to ``arg_terms``.

    Operations with several users inside the body are let-bound once.
    """
    if len(arg_terms) != f.arity:
        raise ValueError(f"{f.name} takes {f.arity} argument(s), got {len(arg_terms)}")
    g = f.body
    nuses = dict.fromkeys(g.nodes, 0)
    for n in g.nodes.values():
        for o in n.operands:
            nuses[o] += 1
    text = dict(zip(f.params, arg_terms))
    binds = []
    for nid in g._order:
        n = g.nodes[nid]
        if n.kind == INPUT:
            continue
        if n.kind == CONST:
            text[nid] = bv_literal(n.value, g.width)
            continue
        ops = [text[o] for o in n.operands]
        if n.kind in SMT_OPS:
            t = f"({SMT_OPS[n.kind]} {' '.join(ops)})"
        elif n.kind in ("rotl", "rotr"):
            t = _rotate(n.kind, ops[0], ops[1], g.width)
        else:
            raise ValueError(f"no SMT mapping for {n.kind!r}")
        if nuses[nid] > 1 and nid != f.result:
            name = f"?{f.name}_{len(binds)}"
            binds.append((name, t))
            text[nid] = name
        else:
            text[nid] = t
    term = text[f.result]
    for name, t in reversed(binds):
        term = f"(let (({name} {t})) {term})"
    return term


# -- function files -----------------------------------------------------------------

_FUNC = re.compile(r"\s*function\s+([A-Za-z_][A-Za-z0-9_]*)\s*(#.*)?$")


def parse_functions(text: str, source=None, default_name=None) -> list[CandidateInstruction]:
    """Parse a ``.fn`` file.

    Statements before the first ``function`` header (typically ``width``)
    apply to every function.  A file without headers holds one candidate
    named ``default_name``.
    """
    lines = text.splitlines()
    heads = [(k, m.group(1)) for k, ln in enumerate(lines) if (m := _FUNC.match(ln))]
    if not heads:
        if default_name is None:
            raise DDGError("no 'function <name>' header", 1, source)
        heads = [(-1, default_name)]
    first = heads[0][0]
    out = []
    for n, (k, name) in enumerate(heads):
        stop = heads[n + 1][0] if n + 1 < len(heads) else len(lines)
        # blank out other blocks so diagnostics keep file line numbers
        body = [ln if (j < first or k < j < stop) else "" for j, ln in enumerate(lines)]
        g = parse_ddg("\n".join(body), name=name, source=source)
        if len(g.outputs) != 1:
            raise DDGError(f"function {name!r} must declare exactly one output", k + 1 if k >= 0 else None, source)
        out.append(CandidateInstruction(name, g))
    return out


def load_functions(path) -> list[CandidateInstruction]:
    p = Path(path)
    return parse_functions(p.read_text(encoding="utf-8"), source=str(p), default_name=p.stem)


def format_functions(cands) -> str:
    parts = []
    for f in cands:
        parts.append(f"function {f.name}\n" + format_ddg(f.body))
    return "\n".join(parts)


def fn_np(f: CandidateInstruction, arrays):
    return eval_fn(f, [np.asarray(a, dtype=np.uint64) for a in arrays])
