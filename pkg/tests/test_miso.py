import pytest

from isext.ddg import parse_ddg, toposort
from isext.miso import ArchConstraints, cluster_inputs, is_legal_miso, make_cluster, max_miso

from helpers import CORPUS, corpus_ddgs, random_dag

CI19 = parse_ddg((CORPUS / "ci19.ddg").read_text(), name="ci19")
D1 = parse_ddg((CORPUS / "d1.ddg").read_text(), name="d1")
BODY = {"t1", "t2", "t3", "t4"}


def test_cluster_inputs_examples():
    assert cluster_inputs(CI19, {"t1"}) == ["a", "b"]
    assert cluster_inputs(CI19, BODY) == ["a", "b", "c", "d"]
    g = parse_ddg("input x\nn = not x\noutput n\n")
    assert cluster_inputs(g, {"n"}) == ["x"]


def test_legality_examples():
    assert is_legal_miso(CI19, BODY, ArchConstraints(max_inputs=4))
    assert not is_legal_miso(CI19, BODY, ArchConstraints(max_inputs=3))
    assert not is_legal_miso(D1, {"t1", "t2"}, ArchConstraints())
    assert is_legal_miso(D1, {"t1", "t2"}, ArchConstraints(), shared=True)
    for n in D1.ops():
        assert is_legal_miso(D1, {n}, ArchConstraints(max_inputs=2))


def test_legality_rules():
    g = parse_ddg("input p\ninput q\nv = load p\nw = add v q\nx = xor w q\noutput x\n")
    assert not is_legal_miso(g, {"v", "w"}, ArchConstraints())
    assert is_legal_miso(g, {"v", "w"}, ArchConstraints(forbidden_kinds=()))
    assert not is_legal_miso(g, {"w", "x"}, ArchConstraints(max_nodes=1))
    assert not is_legal_miso(g, {"v", "x"}, ArchConstraints(forbidden_kinds=()))  # two roots
    with pytest.raises(KeyError):
        is_legal_miso(g, {"nope"}, ArchConstraints())


def test_arch_constraints_validated():
    with pytest.raises(ValueError):
        ArchConstraints(max_inputs=0)


def test_chain_one_cluster():
    g = parse_ddg("input a\ninput b\nn1 = add a b\nn2 = not n1\nn3 = xor n2 a\noutput n3\n")
    cg = max_miso(g, ArchConstraints(max_inputs=6))
    assert [sorted(c.members) for c in cg] == [["n1", "n2", "n3"]]


def test_d1_singletons():
    cg = max_miso(D1, ArchConstraints())
    assert sorted(sorted(c.members) for c in cg) == [["t1"], ["t2"], ["t3"]]


def test_ci19_shrinks_with_max_inputs():
    sizes = {k: sorted(len(c.members) for c in max_miso(CI19, ArchConstraints(max_inputs=k))) for k in (2, 3, 4)}
    assert sizes[4] == [4]
    # by hand: t4 absorbs t3 (inputs t2,d); t2 would add c -> 3 inputs;
    # t2 then cannot take t1 (a,b,c)
    assert sizes[2] == [1, 1, 2]
    assert sizes[3] == [1, 3]


def _check_partition(g, cg, ac):
    seen = set()
    for c in cg:
        assert is_legal_miso(g, c.members, ac)
        assert c == make_cluster(g, c.members)
        assert not (seen & c.members)
        seen |= c.members
    for n in g.ops():
        if n not in seen:
            assert not is_legal_miso(g, {n}, ac)


def _check_maximal(g, cg, ac):
    outs = set(g.outputs)
    for c in cg:
        preds = {o for m in c.members for o in g[m].operands} - c.members
        for p in preds:
            if not g[p].is_op or p in outs or not all(u in c.members for u in g._uses[p]):
                continue
            if p in cg.covered():
                continue
            assert not is_legal_miso(g, c.members | {p}, ac)


@pytest.mark.parametrize("k", range(1, 7))
def test_corpus_partition_and_maximality(k):
    ac = ArchConstraints(max_inputs=k)
    for g in corpus_ddgs():
        cg = max_miso(g, ac)
        _check_partition(g, cg, ac)
        _check_maximal(g, cg, ac)


def test_random_partition():
    for seed in range(100):
        g = random_dag(seed)
        for k in (1, 3, 6):
            ac = ArchConstraints(max_inputs=k)
            _check_partition(g, max_miso(g, ac), ac)


def test_corpus_count_monotone_in_k():
    # nodes that fit no legal cluster stay uncovered and count as one instruction each
    for g in corpus_ddgs():
        counts = []
        for k in range(1, 7):
            cg = max_miso(g, ArchConstraints(max_inputs=k))
            counts.append(len(cg) + len(cg.uncovered()))
        assert counts == sorted(counts, reverse=True), g.name


def test_ordered_follows_topology():
    g = next(d for d in corpus_ddgs() if d.name == "aes_round")
    pos = {n: k for k, n in enumerate(toposort(g))}
    roots = [c.root for c in max_miso(g, ArchConstraints())]
    assert roots == sorted(roots, key=pos.__getitem__)


def test_deterministic():
    g = random_dag(7)
    a = max_miso(g, ArchConstraints(max_inputs=3))
    b = max_miso(g, ArchConstraints(max_inputs=3))
    assert a.same_as(b) and [c.root for c in a] == [c.root for c in b]
