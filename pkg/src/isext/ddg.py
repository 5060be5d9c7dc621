"""Data-dependency graphs of a single basic block.

A DDG is a DAG of operation, input and constant nodes over fixed-width
bitvectors.  Graphs are immutable once built; use :func:`parse_ddg` or
:func:`build_ddg` to construct them.
"""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Iterable, Mapping

import numpy as np

INPUT = "input"
CONST = "const"

ARITY = {
    "add": 2, "sub": 2, "mul": 2,
    "and": 2, "or": 2, "xor": 2, "not": 1,
    "shl": 2, "shrl": 2, "shra": 2,
    "rotl": 2, "rotr": 2,
    "load": 1,
}
OPKINDS = frozenset(ARITY)
COMMUTATIVE = frozenset({"add", "mul", "and", "or", "xor"})

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class DDGError(ValueError):
    """Malformed IR or graph; ``line`` is set for parse errors."""

    def __init__(self, msg, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None and line is not None:
            where = f"{source}:{line}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + msg)


@dataclass(frozen=True)
class Node:
    id: str
    kind: str
    operands: tuple[str, ...] = ()
    value: int | None = None

    @property
    def is_op(self):
        return self.kind not in (INPUT, CONST)


@dataclass(frozen=True, eq=False)
class DDG:
    width: int
    nodes: Mapping[str, Node]
    outputs: tuple[str, ...]
    name: str = "ddg"
    _uses: Mapping[str, tuple[str, ...]] = field(repr=False, default=None)
    _order: tuple[str, ...] = field(repr=False, default=None)

    @property
    def mask(self):
        return (1 << self.width) - 1

    @property
    def inputs(self):
        """Input node ids in declaration order (the parameter order)."""
        return [n.id for n in self.nodes.values() if n.kind == INPUT]

    def ops(self):
        return [i for i in self._order if self.nodes[i].is_op]

    def __getitem__(self, nid):
        return self.nodes[nid]

    def __contains__(self, nid):
        return nid in self.nodes

    def __len__(self):
        return len(self.nodes)


def build_ddg(nodes: Iterable[Node], outputs: Iterable[str], width=32, name="ddg"):
    """Validate ``nodes`` and return a frozen :class:`DDG`."""
    if width < 1:
        raise DDGError(f"width must be positive, got {width}")
    table: dict[str, Node] = {}
    for n in nodes:
        if n.id in table:
            raise DDGError(f"duplicate id {n.id!r}")
        if n.kind == CONST:
            if n.value is None or not 0 <= n.value < (1 << width):
                raise DDGError(f"constant {n.id!r} out of range for width {width}")
        elif n.kind != INPUT and n.kind not in ARITY:
            raise DDGError(f"unknown op kind {n.kind!r}")
        expected = ARITY.get(n.kind, 0)
        if len(n.operands) != expected:
            raise DDGError(f"{n.id!r}: {n.kind} takes {expected} operand(s), got {len(n.operands)}")
        table[n.id] = n
    for n in table.values():
        for o in n.operands:
            if o not in table:
                raise DDGError(f"{n.id!r}: undefined operand {o!r}")
    outputs = tuple(outputs)
    for o in outputs:
        if o not in table:
            raise DDGError(f"output references unknown id {o!r}")

    uses: dict[str, list[str]] = {i: [] for i in table}
    for n in table.values():
        for o in dict.fromkeys(n.operands):
            uses[o].append(n.id)
    order = _kahn(table, uses)
    if len(order) != len(table):
        stuck = sorted(set(table) - set(order))
        raise DDGError(f"cyclic definition involving {stuck[0]!r}")
    return DDG(
        width=width,
        nodes=MappingProxyType(table),
        outputs=outputs,
        name=name,
        _uses=MappingProxyType({k: tuple(sorted(v)) for k, v in uses.items()}),
        _order=tuple(order),
    )


def _kahn(table, uses):
    indeg = {i: len(set(n.operands)) for i, n in table.items()}
    ready = [i for i, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        i = heapq.heappop(ready)
        order.append(i)
        for u in uses[i]:
            indeg[u] -= 1
            if indeg[u] == 0:
                heapq.heappush(ready, u)
    return order


def _parse_int(tok):
    return int(tok, 16) if tok.lower().startswith("0x") else int(tok, 10)


def parse_ddg(text: str, name="ddg", source=None) -> DDG:
    """Parse the line-oriented IR::

        width 8
        input x
        k = const 0xff
        n1 = and x k
        output n1
    """
    width = None
    nodes: list[Node] = []
    outputs: list[str] = []
    lines: dict[str, int] = {}

    def err(msg, lineno):
        return DDGError(msg, lineno, source)

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        head = toks[0]
        if head == "width" and len(toks) == 2:
            if width is not None:
                raise err("width declared twice", lineno)
            if nodes:
                raise err("width must precede node definitions", lineno)
            try:
                width = int(toks[1])
            except ValueError:
                raise err(f"bad width {toks[1]!r}", lineno) from None
            if width < 1:
                raise err("width must be positive", lineno)
        elif head == "input" and len(toks) == 2:
            _check_ident(toks[1], lineno, source)
            if toks[1] in lines:
                raise err(f"duplicate id {toks[1]!r}", lineno)
            nodes.append(Node(toks[1], INPUT))
            lines[toks[1]] = lineno
        elif head == "output" and len(toks) == 2:
            _check_ident(toks[1], lineno, source)
            outputs.append(toks[1])
            lines.setdefault("output " + toks[1], lineno)
        elif len(toks) >= 3 and toks[1] == "=":
            nid, kind, args = toks[0], toks[2], toks[3:]
            _check_ident(nid, lineno, source)
            if nid in lines:
                raise err(f"duplicate id {nid!r}", lineno)
            if kind == CONST:
                if len(args) != 1:
                    raise err("const takes exactly one value", lineno)
                try:
                    value = _parse_int(args[0])
                except ValueError:
                    raise err(f"bad constant {args[0]!r}", lineno) from None
                nodes.append(Node(nid, CONST, (), value))
            elif kind in ARITY:
                if len(args) != ARITY[kind]:
                    raise err(f"{kind} takes {ARITY[kind]} operand(s), got {len(args)}", lineno)
                for a in args:
                    _check_ident(a, lineno, source)
                nodes.append(Node(nid, kind, tuple(args)))
            else:
                raise err(f"unknown op kind {kind!r}", lineno)
            lines[nid] = lineno
        else:
            raise err(f"syntax error: {line!r}", lineno)

    width = 32 if width is None else width
    seen = {n.id for n in nodes}
    for n in nodes:
        if n.kind == CONST and n.value >= (1 << width):
            raise err(f"constant {n.id!r} does not fit in {width} bits", lines.get(n.id))
    for n in nodes:
        for o in n.operands:
            if o not in seen:
                raise err(f"{n.id!r}: undefined operand {o!r}", lines.get(n.id))
    for o in outputs:
        if o not in seen:
            raise err(f"output references unknown id {o!r}", lines.get("output " + o))
    try:
        return build_ddg(nodes, outputs, width, name)
    except DDGError as e:
        raise DDGError(str(e), None, source) from None


def _check_ident(tok, lineno, source):
    if not _IDENT.match(tok):
        raise DDGError(f"bad identifier {tok!r}", lineno, source)


def load_ddg(path) -> DDG:
    from pathlib import Path

    p = Path(path)
    return parse_ddg(p.read_text(encoding="utf-8"), name=p.stem, source=str(p))


def format_ddg(g: DDG) -> str:
    """Serialize back to IR text; ``parse_ddg(format_ddg(g))`` round-trips."""
    out = [f"width {g.width}"]
    for n in g.nodes.values():
        if n.kind == INPUT:
            out.append(f"input {n.id}")
        elif n.kind == CONST:
            out.append(f"{n.id} = const {n.value:#x}")
        else:
            out.append(f"{n.id} = {n.kind} {' '.join(n.operands)}")
    out += [f"output {o}" for o in g.outputs]
    return "\n".join(out) + "\n"


def retarget(g: DDG, width: int) -> DDG:
    """Same graph at another width; constants are truncated mod 2**width."""
    mask = (1 << width) - 1
    nodes = [Node(n.id, n.kind, n.operands, n.value & mask) if n.kind == CONST else n
             for n in g.nodes.values()]
    return build_ddg(nodes, g.outputs, width, g.name)


def toposort(g: DDG) -> list[str]:
    """Operands before users; ties broken by lexicographic id."""
    return list(g._order)


def uses(g: DDG, nid: str) -> set[str]:
    if nid not in g.nodes:
        raise KeyError(f"unknown node id {nid!r}")
    return set(g._uses[nid])


def is_convex(g: DDG, s) -> bool:
    """True iff no path leaves ``s`` and re-enters it."""
    s = set(s)
    for i in s:
        if i not in g.nodes:
            raise KeyError(f"unknown node id {i!r}")
    frontier = [u for i in s for u in g._uses[i] if u not in s]
    seen = set()
    while frontier:
        n = frontier.pop()
        if n in seen:
            continue
        seen.add(n)
        for u in g._uses[n]:
            if u in s:
                return False
            frontier.append(u)
    return True


# -- semantics --------------------------------------------------------------

def apply_op(kind: str, args, width: int):
    """Evaluate one operation on W-bit unsigned Python ints."""
    mask = (1 << width) - 1
    a = args[0]
    b = args[1] if len(args) > 1 else None
    if kind == "add":
        return (a + b) & mask
    if kind == "sub":
        return (a - b) & mask
    if kind == "mul":
        return (a * b) & mask
    if kind == "and":
        return a & b
    if kind == "or":
        return a | b
    if kind == "xor":
        return a ^ b
    if kind == "not":
        return ~a & mask
    if kind == "shl":
        return (a << b) & mask if b < width else 0
    if kind == "shrl":
        return a >> b if b < width else 0
    if kind == "shra":
        signed = a - (1 << width) if a >> (width - 1) else a
        return (signed >> min(b, width - 1)) & mask
    if kind in ("rotl", "rotr"):
        r = b % width
        if kind == "rotr":
            r = (width - r) % width
        return ((a << r) | (a >> (width - r))) & mask if r else a
    raise ValueError(f"cannot evaluate {kind!r}")


def apply_op_np(kind: str, args, width: int):
    """Vectorized :func:`apply_op` over uint64 arrays; width <= 32."""
    if width > 32:
        raise ValueError("vectorized evaluation supports width <= 32")
    m = np.uint64((1 << width) - 1)
    w = np.uint64(width)
    a = args[0]
    b = args[1] if len(args) > 1 else None
    if kind == "add":
        return (a + b) & m
    if kind == "sub":
        return (a - b) & m
    if kind == "mul":
        return (a * b) & m
    if kind == "and":
        return a & b
    if kind == "or":
        return a | b
    if kind == "xor":
        return a ^ b
    if kind == "not":
        return ~a & m
    if kind == "shl":
        return np.where(b < w, (a << np.minimum(b, w - 1)) & m, np.uint64(0))
    if kind == "shrl":
        return np.where(b < w, a >> np.minimum(b, w - 1), np.uint64(0))
    if kind == "shra":
        sign = (a >> (w - np.uint64(1))) & np.uint64(1)
        sh = np.minimum(b, w - np.uint64(1))
        fill = np.where(sign == 1, m & ~(m >> sh), np.uint64(0))
        return (a >> sh) | fill
    if kind in ("rotl", "rotr"):
        r = b % w
        if kind == "rotr":
            r = (w - r) % w
        left = (a << r) & m
        right = np.where(r == 0, np.uint64(0), a >> ((w - r) % w))
        return (left | right) & m
    raise ValueError(f"cannot evaluate {kind!r}")


class EvalError(ValueError):
    pass


def eval_ddg(g: DDG, env: Mapping[str, int], mem: Callable | None = None) -> dict[str, int]:
    """Values of ``g``'s outputs for input bindings ``env``.

    ``env`` values may be ints or uint64 numpy arrays (width <= 32); ``mem``
    maps an address (same type) to a loaded value.
    """
    vals = eval_nodes(g, env, mem)
    return {o: vals[o] for o in g.outputs}


def eval_nodes(g: DDG, env, mem=None, only=None):
    arrays = [v for v in env.values() if isinstance(v, np.ndarray)]
    vector = bool(arrays)
    shape = np.broadcast_shapes(*(a.shape for a in arrays)) if vector else ()
    apply = apply_op_np if vector else apply_op
    vals = {}
    for nid in g._order:
        if only is not None and nid not in only:
            continue
        n = g.nodes[nid]
        if n.kind == INPUT:
            if nid not in env:
                raise EvalError(f"unbound input {nid!r}")
            vals[nid] = np.asarray(env[nid], dtype=np.uint64) if vector else env[nid] & g.mask
        elif n.kind == CONST:
            vals[nid] = np.full(shape, n.value, dtype=np.uint64) if vector else n.value
        elif n.kind == "load":
            if mem is None:
                raise EvalError(f"load {nid!r} evaluated without a memory oracle")
            vals[nid] = mem(vals[n.operands[0]])
            if not vector:
                vals[nid] &= g.mask
        else:
            vals[nid] = apply(n.kind, [vals[o] for o in n.operands], g.width)
    return vals


def hash_memory(width: int):
    """Deterministic pseudo-random memory, usable on ints and uint64 arrays."""
    mask = (1 << width) - 1

    def mem(addr):
        if isinstance(addr, np.ndarray):
            x = (addr * np.uint64(0x9E3779B1) + np.uint64(0x7F4A7C15)) & np.uint64(0xFFFFFFFF)
            x ^= x >> np.uint64(15)
            return (x * np.uint64(0x2C1B3C6D)) & np.uint64(mask)
        x = (addr * 0x9E3779B1 + 0x7F4A7C15) & 0xFFFFFFFF
        x ^= x >> 15
        return (x * 0x2C1B3C6D) & mask

    return mem
