"""Shared generators for tests: random DAGs and planted subsumption sets."""

import random
from importlib import resources
from pathlib import Path

from isext.candidate import CandidateInstruction, load_functions
from isext.ddg import ARITY, CONST, INPUT, Node, build_ddg, load_ddg
from isext.subsume import Arg, Const, Witness

CORPUS = Path(resources.files("isext") / "corpus")
OPS = sorted(k for k in ARITY if k != "load")


def corpus_ddgs():
    return [load_ddg(p) for p in sorted(CORPUS.glob("*.ddg"))]


def corpus_functions():
    out = []
    for p in sorted(CORPUS.glob("*.fn")) + sorted((CORPUS / "raycast").glob("*.fn")):
        out += load_functions(p)
    return out


def table2():
    return [f for p in sorted((CORPUS / "raycast").glob("*.fn")) for f in load_functions(p)]


def random_dag(seed, max_nodes=30, width=32, loads=True):
    """Seeded random DDG with at most ``max_nodes`` nodes in total."""
    rng = random.Random(seed)
    n_in = rng.randint(1, 4)
    nodes = [Node(f"x{j}", INPUT) for j in range(n_in)]
    if rng.random() < 0.5:
        nodes.append(Node("c0", CONST, value=rng.randrange(1 << width)))
    total = rng.randint(len(nodes) + 1, max_nodes)
    kinds = OPS + (["load"] if loads else [])
    k = 0
    while len(nodes) < total:
        kind = rng.choice(kinds)
        # bias operands toward recent nodes so chains and shared values both occur
        pool = [n.id for n in nodes]
        ops = tuple(pool[max(0, len(pool) - 1 - int(rng.expovariate(0.4)))] for _ in range(ARITY[kind]))
        nodes.append(Node(f"n{k}", kind, ops))
        k += 1
    used = {o for n in nodes for o in n.operands}
    sinks = [n.id for n in nodes if n.is_op and n.id not in used]
    extra = [n.id for n in nodes if n.is_op and n.id in used and rng.random() < 0.1]
    return build_ddg(nodes, sinks + extra, width, name=f"rand{seed}")


def fn_from_text(name, expr_lines, params, width=32):
    from isext.candidate import parse_functions
    body = "\n".join([f"width {width}", f"function {name}"] + [f"input {p}" for p in params] + expr_lines)
    return parse_functions(body)[0]


def wrap(f, name, witness: Witness):
    """g(y1..ym) := f(witness slots); f subsumes g by construction."""
    m = max(s.index for s in witness.slots if isinstance(s, Arg))
    nodes = [Node(f"y{j}", INPUT) for j in range(1, m + 1)]
    env = {}
    for p, s in zip(f.params, witness.slots):
        if isinstance(s, Arg):
            env[p] = f"y{s.index}"
        else:
            nodes.append(Node(f"k_{p}", CONST, value=s.value))
            env[p] = f"k_{p}"
    for nid in f.body._order:
        n = f.body.nodes[nid]
        if n.kind == INPUT:
            continue
        if n.kind == CONST:
            nodes.append(Node(nid, CONST, value=n.value))
            env[nid] = nid
            continue
        nodes.append(Node(nid, n.kind, tuple(env.get(o, o) for o in n.operands)))
        env[nid] = nid
    return CandidateInstruction(name, build_ddg(nodes, [f.result], f.width, name))


def planted_set(seed, width=8):
    """Base functions that do not subsume one another, plus wrapped copies.

    Returns (candidates, base names, planted names).
    """
    rng = random.Random(seed)
    bases = [
        fn_from_text("b_mix", ["t = add a b", "u = xor t c", "r = rotl u d", "output r"], "abcd", width),
        fn_from_text("b_andor", ["t = and a b", "r = or t c", "output r"], "abc", width),
        fn_from_text("b_sub", ["t = sub a b", "s = shl t c", "output s"], "abc", width),
    ]
    planted = []
    for f in bases:
        for copy in range(2):
            n = f.arity
            m = rng.randint(1, n - 1) if copy == 0 else n
            choice = [Arg(j) for j in range(1, m + 1)]
            while len(choice) < n:
                choice.append(Const(rng.randrange(1 << width)) if rng.random() < 0.7 else Arg(rng.randint(1, m)))
            rng.shuffle(choice)
            planted.append(wrap(f, f"p_{f.name[2:]}{copy}", Witness(tuple(choice))))
    return bases + planted, [f.name for f in bases], [g.name for g in planted]
