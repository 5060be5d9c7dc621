import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isext.ddg import (ARITY, DDGError, EvalError, Node, apply_op, apply_op_np, build_ddg, eval_ddg, format_ddg,
                       hash_memory, is_convex, parse_ddg, retarget, toposort, uses)

from helpers import CORPUS, corpus_ddgs, random_dag

D1 = (CORPUS / "d1.ddg").read_text()


def test_parse_d1():
    g = parse_ddg(D1, name="d1")
    assert list(g.inputs) == ["x", "y"]
    assert list(g.outputs) == ["t2", "t3"]
    assert g["k255"].value == 255
    assert uses(g, "t1") == {"t2", "t3"}
    assert len(g.ops()) == 3


def test_eval_d1_by_hand():
    g = parse_ddg(D1)
    out = eval_ddg(g, {"x": 0xFFFFFFF0, "y": 0x25})
    s = (0xFFFFFFF0 + 0x25) & 0xFFFFFFFF
    assert out == {"t2": s & 255, "t3": ~s & 0xFFFFFFFF}
    assert out["t2"] == 0x15


def test_toposort_tie_break_is_lexicographic():
    g = parse_ddg("input b\ninput a\nz = add a b\ny = add a b\noutput z\noutput y\n")
    assert toposort(g) == ["a", "b", "y", "z"]


def test_uses_unknown_id():
    g = parse_ddg(D1)
    with pytest.raises(KeyError):
        uses(g, "nope")


@pytest.mark.parametrize("text, line, frag", [
    ("input x\ny = frob x\noutput y\n", 2, "frob"),
    ("input x\ny = add x\noutput y\n", 2, "operand"),
    ("input x\ny = add x q\noutput y\n", 2, "q"),
    ("input x\ninput x\n", 2, "x"),
    ("input x\noutput z\n", 2, "z"),
    ("width 0\n", 1, "width"),
    ("input x\nk = const zz\n", 2, "zz"),
])
def test_parse_errors_carry_line(text, line, frag):
    with pytest.raises(DDGError) as ei:
        parse_ddg(text, source="f.ddg")
    assert ei.value.line == line
    assert f"f.ddg:{line}:" in str(ei.value)
    assert frag in str(ei.value)


def test_cycle_rejected():
    nodes = [Node("x", "input"), Node("a", "add", ("x", "b")), Node("b", "add", ("a", "x"))]
    with pytest.raises(DDGError, match="cycl"):
        build_ddg(nodes, ["b"])


def test_format_roundtrip_corpus():
    for g in corpus_ddgs():
        h = parse_ddg(format_ddg(g), name=g.name)
        assert toposort(h) == toposort(g)
        assert h.outputs == g.outputs
        assert all(h[i] == g[i] for i in g.nodes)


def test_retarget_masks_constants():
    g = retarget(parse_ddg(D1), 4)
    assert g.width == 4 and g["k255"].value == 15


def test_shift_edges():
    assert apply_op("shl", [1, 32], 32) == 0
    assert apply_op("shrl", [0x80000000, 40], 32) == 0
    assert apply_op("shra", [0x80000000, 40], 32) == 0xFFFFFFFF
    assert apply_op("shra", [0x40000000, 40], 32) == 0
    assert apply_op("rotl", [0x80000001, 33], 32) == 0x00000003
    assert apply_op("rotr", [0x00000003, 1], 32) == 0x80000001
    assert apply_op("sub", [0, 1], 8) == 0xFF


def _ref(kind, a, b, w):
    """Independent reference built from signed/unsigned arithmetic on bit lists."""
    m = (1 << w) - 1
    bits = [(a >> i) & 1 for i in range(w)]
    if kind == "rotl":
        r = b % w
        bits = bits[w - r:] + bits[:w - r] if r else bits
        return sum(v << i for i, v in enumerate(bits))
    if kind == "rotr":
        r = b % w
        bits = bits[r:] + bits[:r]
        return sum(v << i for i, v in enumerate(bits))
    if kind == "shra":
        sa = a - (1 << w) if bits[-1] else a
        return (sa // (2 ** min(b, w))) & m if b < w else (m if bits[-1] else 0)
    if kind == "shl":
        return (a * 2 ** b) & m
    if kind == "shrl":
        return a // 2 ** b
    return {"add": a + b, "sub": a - b, "mul": a * b, "and": a & b, "or": a | b, "xor": a ^ b,
            "not": ~a}[kind] & m


@pytest.mark.parametrize("kind", sorted(k for k in ARITY if k != "load"))
def test_ops_exhaustive_w4(kind):
    w = 4
    a, b = np.meshgrid(np.arange(16, dtype=np.uint64), np.arange(16, dtype=np.uint64), indexing="ij")
    args = [a.ravel(), b.ravel()][:ARITY[kind]]
    vec = apply_op_np(kind, args, w)
    for k in range(256):
        scalar = [int(x[k]) for x in args]
        want = _ref(kind, scalar[0], scalar[1] if len(scalar) > 1 else 0, w)
        assert apply_op(kind, scalar, w) == want
        assert int(vec[k]) == want


@settings(max_examples=300, deadline=None)
@given(st.sampled_from(sorted(k for k in ARITY if k != "load")),
       st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
def test_np_matches_scalar_w32(kind, a, b):
    args = [a, b][:ARITY[kind]]
    want = apply_op(kind, args, 32)
    got = apply_op_np(kind, [np.array([x], dtype=np.uint64) for x in args], 32)
    assert int(got[0]) == want


def test_eval_vector_matches_scalar():
    rng = np.random.default_rng(1)
    mem = hash_memory(32)
    for seed in range(20):
        g = random_dag(seed)
        xs = {i: rng.integers(0, 2**32, 50, dtype=np.uint64) for i in g.inputs}
        vec = eval_ddg(g, xs, mem)
        for k in range(50):
            sc = eval_ddg(g, {i: int(v[k]) for i, v in xs.items()}, mem)
            assert {o: int(vec[o][k]) for o in g.outputs} == sc


def test_load_needs_memory():
    g = parse_ddg("input p\nv = load p\noutput v\n")
    with pytest.raises(EvalError):
        eval_ddg(g, {"p": 4})
    assert eval_ddg(g, {"p": 4}, hash_memory(32))["v"] == hash_memory(32)(4)


def test_convexity():
    g = parse_ddg("input x\na = add x x\nb = not a\nc = xor a b\noutput c\n")
    assert is_convex(g, {"a", "b", "c"})
    assert is_convex(g, {"b", "c"})
    assert not is_convex(g, {"a", "c"})  # path a -> b -> c leaves the set


def test_spec_smallest_program():
    g = parse_ddg("width 8\ninput x\nn1 = not x\noutput n1")
    assert len(g.nodes) == 2 and list(g.outputs) == ["n1"] and g.width == 8


def test_ci19_eval_and_order():
    g = parse_ddg((CORPUS / "ci19.ddg").read_text())
    assert len(g.ops()) == 4
    order = toposort(g)
    pos = {n: k for k, n in enumerate(order)}
    for n in g.nodes.values():
        assert all(pos[o] < pos[n.id] for o in n.operands)
    assert eval_ddg(g, {"a": 1, "b": 2, "c": 0, "d": 5}) == {"t4": 8}
    assert not is_convex(g, {"t1", "t4"})
    assert is_convex(g, set(g.nodes))


def test_undefined_operand():
    with pytest.raises(DDGError, match="undefined operand 'x'"):
        parse_ddg("input y\nn1 = add x y\noutput n1\n")


def test_add_wraps():
    g = parse_ddg("input x\ninput y\ns = add x y\noutput s\n")
    assert eval_ddg(g, {"x": 2**32 - 1, "y": 1}) == {"s": 0}
