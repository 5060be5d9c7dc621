"""Deciding whether one candidate instruction subsumes another.

``f`` subsumes ``g`` when each argument slot of ``f`` can be filled with an
argument of ``g`` or a constant so that ``f`` and ``g`` agree on every input.
The filling (the witness) is found by counterexample-guided synthesis: a
synthesis query proposes a witness consistent with a finite test set, a
verification query either proves it for all inputs or returns a new test.
"""

from __future__ import annotations

import itertools
import logging
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .candidate import CandidateInstruction, bv_literal, emit_term, eval_fn
from .smt import MAX_BRUTE_BITS, Sat, SolverSession, Unknown, Unsat, brute_check, check

log = logging.getLogger(__name__)

SUBSUMES = "subsumes"
NOT_SUBSUMED = "not-subsumed"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class Arg:
    index: int  # 1-based position in g's argument list

    def __str__(self):
        return f"x{self.index}"


@dataclass(frozen=True)
class Const:
    value: int

    def __str__(self):
        return f"{self.value:#x}"


@dataclass(frozen=True)
class Witness:
    slots: tuple

    def check(self, m: int):
        used = {s.index for s in self.slots if isinstance(s, Arg)}
        if used != set(range(1, m + 1)):
            raise ValueError(f"witness {self} does not use every argument of a {m}-ary function")
        if len(self.slots) < m:
            raise ValueError("witness shorter than the subsumed function's arity")

    def apply(self, xs):
        """The argument tuple for f given g's arguments ``xs``."""
        out = []
        for s in self.slots:
            if isinstance(s, Arg):
                out.append(xs[s.index - 1])
            elif isinstance(xs[0], np.ndarray):
                out.append(np.full(xs[0].shape, s.value, dtype=np.uint64))
            else:
                out.append(s.value)
        return out

    def __str__(self):
        return " ".join(map(str, self.slots))

    @classmethod
    def parse(cls, text):
        slots = []
        for tok in text.split():
            if tok.startswith("x"):
                slots.append(Arg(int(tok[1:])))
            else:
                slots.append(Const(int(tok, 0)))
        return cls(tuple(slots))


def identity_witness(m: int) -> Witness:
    return Witness(tuple(Arg(j) for j in range(1, m + 1)))


def compose(w_fg: Witness, w_gh: Witness) -> Witness:
    """Witness for f over h from witnesses for f over g and g over h."""
    return Witness(tuple(w_gh.slots[s.index - 1] if isinstance(s, Arg) else s for s in w_fg.slots))


def holds_on(f, g, w: Witness, xs) -> bool:
    return eval_fn(f, w.apply(list(xs))) == eval_fn(g, list(xs))


class Inconclusive(Exception):
    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


class BruteForce:
    """Enumeration oracle standing in for the SMT solver at small widths."""

    def __repr__(self):
        return "BruteForce()"


def _gate(f: CandidateInstruction, g: CandidateInstruction):
    if f.width != g.width:
        raise ValueError(f"width mismatch: {f.name} is {f.width}-bit, {g.name} is {g.width}-bit")
    return f.arity >= g.arity


# -- synthesis ---------------------------------------------------------------------

def synth(f, g, tests, solver) -> Witness | None:
    """A witness consistent with every test in ``tests``, or None if none exists.

    Raises :class:`Inconclusive` when the solver gives up.
    """
    if not _gate(f, g):
        return None
    if isinstance(solver, BruteForce):
        return _synth_enum(f, g, tests)
    return _synth_smt(f, g, tests, solver)


def _sel_width(n):
    return max(1, n.bit_length())


def _synth_smt(f, g, tests, sess: SolverSession):
    n, m, W = f.arity, g.arity, f.width
    b = _sel_width(n)
    ps = [f"p{i}" for i in range(1, n + 1)]
    cs = [f"c{j}" for j in range(1, n - m + 1)]
    decls = [(p, b) for p in ps] + [(c, W) for c in cs]
    sel = {j: bv_literal(j, b) for j in range(1, n + 1)}
    asserts = []
    for p in ps:
        asserts.append(f"(bvule {sel[1]} {p})")
        asserts.append(f"(bvule {p} {sel[n]})")
    for j in range(1, m + 1):
        asserts.append("(or " + " ".join(f"(= {p} {sel[j]})" for p in ps) + ")" if n > 1 else f"(= {ps[0]} {sel[j]})")
    for x in tests:
        options = [bv_literal(v, W) for v in x] + cs
        vs = []
        for p in ps:
            term = options[-1]
            for j in range(n - 1, 0, -1):
                term = f"(ite (= {p} {sel[j]}) {options[j - 1]} {term})"
            vs.append(term)
        want = bv_literal(eval_fn(g, list(x)), W)
        asserts.append(f"(= {emit_term(f, vs)} {want})")
    res = check(sess, decls, asserts, ps + cs)
    if isinstance(res, Unknown):
        raise Inconclusive(res.reason)
    if isinstance(res, Unsat):
        return None
    slots = []
    for p in ps:
        k = res.model[p]
        slots.append(Arg(k) if k <= m else Const(res.model[cs[k - m - 1]]))
    return Witness(tuple(slots))


def slot_patterns(n, m):
    """Argument/constant layouts for n slots that use all m arguments.

    Each pattern is a tuple of 1-based argument indices or 0 for a constant.
    """
    for pat in itertools.product(range(m + 1), repeat=n):
        if set(range(1, m + 1)) <= set(pat):
            yield pat


def _synth_enum(f, g, tests):
    n, m, W = f.arity, g.arity, f.width
    tests = [tuple(x) for x in tests]
    wants = [eval_fn(g, list(x)) for x in tests]
    for pat in slot_patterns(n, m):
        k = pat.count(0)
        if W * k > MAX_BRUTE_BITS:
            raise ValueError(f"constant space 2^{W * k} too large to enumerate")
        if not tests:
            return Witness(tuple(Arg(j) if j else Const(0) for j in pat))
        # rows: constant assignments, columns: tests
        consts = _grid(W, k)
        ncon = consts.shape[0]
        ok = np.ones(ncon, dtype=bool)
        for x, want in zip(tests, wants):
            args, ci = [], 0
            for j in pat:
                if j:
                    args.append(np.full(ncon, x[j - 1], dtype=np.uint64))
                else:
                    args.append(consts[:, ci])
                    ci += 1
            ok &= eval_fn(f, args) == np.uint64(want)
            if not ok.any():
                break
        if ok.any():
            row = consts[int(np.argmax(ok))]
            it = iter(int(v) for v in row)
            return Witness(tuple(Arg(j) if j else Const(next(it)) for j in pat))
    return None


def _grid(width, k):
    if k == 0:
        return np.zeros((1, 0), dtype=np.uint64)
    axes = np.meshgrid(*[np.arange(1 << width, dtype=np.uint64)] * k, indexing="ij")
    return np.stack([a.ravel() for a in axes], axis=1)


# -- verification -----------------------------------------------------------------

def verify(f, g, w: Witness, solver):
    """None if ``w`` is valid for all inputs, else a counterexample tuple."""
    w.check(g.arity)
    if isinstance(solver, BruteForce):
        return _verify_enum(f, g, w)
    m, W = g.arity, g.width
    xs = [f"x{j}" for j in range(1, m + 1)]
    vterms = [xs[s.index - 1] if isinstance(s, Arg) else bv_literal(s.value, W) for s in w.slots]
    assertion = f"(not (= {emit_term(f, vterms)} {emit_term(g, xs)}))"
    res = check(solver, [(x, W) for x in xs], [assertion], xs)
    if isinstance(res, Unknown):
        raise Inconclusive(res.reason)
    if isinstance(res, Unsat):
        return None
    return tuple(res.model[x] for x in xs)


def _verify_enum(f, g, w):
    m, W = g.arity, g.width
    names = [f"x{j}" for j in range(1, m + 1)]

    def differs(env):
        xs = [env[n] for n in names]
        return eval_fn(f, w.apply(xs)) != eval_fn(g, xs)

    res = brute_check([(n, W) for n in names], [differs], vectorized=True)
    if isinstance(res, Sat):
        return tuple(res.model[n] for n in names)
    return None


def random_counterexample(f, g, w: Witness, count=100_000, seed=0):
    """First of ``count`` random inputs where ``w`` fails, or None."""
    m, W = g.arity, g.width
    rng = np.random.default_rng(seed)
    if W <= 32:
        xs = [rng.integers(0, 1 << W, size=count, dtype=np.uint64) for _ in range(m)]
        bad = eval_fn(f, w.apply(xs)) != eval_fn(g, xs)
        if bad.any():
            k = int(np.argmax(bad))
            return tuple(int(x[k]) for x in xs)
        return None
    prng = random.Random(seed)
    for _ in range(min(count, 2000)):
        x = tuple(prng.getrandbits(W) for _ in range(m))
        if not holds_on(f, g, w, x):
            return x
    return None


# -- CEGIS ----------------------------------------------------------------------------

@dataclass
class SubsumeResult:
    f: str
    g: str
    status: str
    witness: Witness | None = None
    iterations: int = 0
    tests: list = field(default_factory=list)
    trace: list = field(default_factory=list)  # (witness, counterexample) per failed round
    reason: str = ""
    elapsed_ms: float = 0.0

    @property
    def subsumes(self):
        return self.status == SUBSUMES


def subsume(f, g, solver, max_iters=64, random_checks=100_000, seed=0) -> SubsumeResult:
    """Decide whether ``f`` subsumes ``g`` by counterexample-guided synthesis."""
    t0 = time.perf_counter()
    res = SubsumeResult(f.name, g.name, NOT_SUBSUMED)

    def done(status, **kw):
        res.status = status
        for k, v in kw.items():
            setattr(res, k, v)
        res.elapsed_ms = (time.perf_counter() - t0) * 1000.0
        return res

    if not _gate(f, g):
        return done(NOT_SUBSUMED, reason="arity")
    tests: list[tuple] = []
    try:
        while True:
            if res.iterations >= max_iters:
                return done(INCONCLUSIVE, reason="iteration-limit")
            res.iterations += 1
            w = synth(f, g, tests, solver)
            if w is None:
                return done(NOT_SUBSUMED, reason="no witness")
            cex = verify(f, g, w, solver)
            if cex is None and random_checks:
                cex = random_counterexample(f, g, w, random_checks, seed + res.iterations)
                if cex is not None:
                    log.warning("%s/%s: verified witness %s failed a random test", f.name, g.name, w)
            if cex is None:
                return done(SUBSUMES, witness=w)
            assert not holds_on(f, g, w, cex), "counterexample does not falsify its witness"
            assert cex not in tests, "duplicate counterexample"
            res.trace.append((w, cex))
            tests.append(cex)
            res.tests = tests
    except Inconclusive as e:
        return done(INCONCLUSIVE, reason=e.reason)


# -- independent oracle ----------------------------------------------------------

def exhaustive_subsumes(f, g, sample=64) -> Witness | None:
    """Search every (argument, constant) filling against the full input grid.

    Only for tiny widths: the input grid has 2**(m*W) points.
    """
    if not _gate(f, g):
        return None
    n, m, W = f.arity, g.arity, g.width
    if m * W > MAX_BRUTE_BITS:
        raise ValueError("input space too large for exhaustive search")
    full = [a.ravel() for a in np.meshgrid(*[np.arange(1 << W, dtype=np.uint64)] * m, indexing="ij")]
    want_full = eval_fn(g, full)
    pick = np.random.default_rng(12345).choice(full[0].size, size=min(sample, full[0].size), replace=False)
    sub = [x[pick] for x in full]
    want_sub = want_full[pick]
    for choice in itertools.product(range(m + 1), repeat=n):
        if not set(range(1, m + 1)) <= set(choice):
            continue
        k = choice.count(0)
        for cvals in itertools.product(range(1 << W), repeat=k):
            it = iter(cvals)
            slots = tuple(Arg(j) if j else Const(next(it)) for j in choice)
            w = Witness(slots)
            if not np.array_equal(eval_fn(f, w.apply(sub)), want_sub):
                continue
            if np.array_equal(eval_fn(f, w.apply(full)), want_full):
                return w
    return None


# -- set minimization ------------------------------------------------------------

@dataclass
class MinimizeResult:
    kept: list
    removed: list  # (g, f, witness): g is reproduced by kept f through witness
    results: dict  # (f name, g name) -> SubsumeResult
    before: int = 0

    @property
    def factor(self):
        return self.before / len(self.kept) if self.kept else float("inf")

    @property
    def inconclusive(self):
        return [r for r in self.results.values() if r.status == INCONCLUSIVE]


def candidate_pairs(cands):
    """(f, g) pairs worth checking, larger f first."""
    order = sorted(cands, key=lambda c: (-c.arity, c.name))
    return [(f, g) for f in order for g in order if f is not g and f.arity >= g.arity and f.width == g.width]


def minimize_set(cands, solver, max_iters=64, jobs=1, random_checks=100_000) -> MinimizeResult:
    cands = list(cands)
    by_name = {c.name: c for c in cands}
    pairs = candidate_pairs(cands)

    def run(pair):
        f, g = pair
        return subsume(f, g, solver, max_iters=max_iters, random_checks=random_checks)

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            outs = list(pool.map(run, pairs))
    else:
        outs = [run(p) for p in pairs]
    results = {(r.f, r.g): r for r in outs}
    rel = {k: r.witness for k, r in results.items() if r.subsumes}

    # mutual subsumption classes
    parent = {c.name: c.name for c in cands}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for (a, b) in rel:
        if (b, a) in rel:
            parent[find(a)] = find(b)
    classes: dict[str, list] = {}
    for c in cands:
        classes.setdefault(find(c.name), []).append(c)
    rep = {}
    for members in classes.values():
        best = min(members, key=lambda c: (-c.arity, c.op_count(), c.name))
        for c in members:
            rep[c.name] = best.name

    kept = []
    for c in cands:
        if rep[c.name] != c.name:
            continue
        if any(a != c.name and rep[a] != c.name for (a, b) in rel if b == c.name):
            continue
        kept.append(c)
    kept_names = {c.name for c in kept}

    removed = []
    for c in cands:
        if c.name in kept_names:
            continue
        path = _path_to_kept(c.name, rel, kept_names)
        if path is None:
            # no proof chain reaches a kept candidate; keep it (never remove without proof)
            kept.append(c)
            kept_names.add(c.name)
            continue
        f_name, w = path
        removed.append((c, by_name[f_name], w))
    kept.sort(key=lambda c: cands.index(c))
    return MinimizeResult(kept, removed, results, before=len(cands))


def _path_to_kept(g, rel, kept):
    """BFS up the subsumption relation from ``g`` to a kept candidate."""
    frontier = [(g, None)]
    seen = {g}
    while frontier:
        nxt = []
        for node, w in frontier:
            for (a, b), wab in sorted(rel.items()):
                if b != node or a in seen:
                    continue
                wa = wab if w is None else compose(wab, w)
                if a in kept:
                    return a, wa
                seen.add(a)
                nxt.append((a, wa))
        frontier = nxt
    return None
