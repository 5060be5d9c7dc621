"""SMT-LIB2 (QF_BV) over a solver subprocess, plus an enumeration oracle.

Every :func:`check` spawns a fresh solver process, writes a complete script
on stdin and parses stdout.  No incremental state is kept between queries.
"""

from __future__ import annotations

import itertools
import logging
import os
import shlex
import shutil
import subprocess
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

ENV_VAR = "ISEXT_SMT_CMD"
DEFAULT_CMD = "z3 -in -smt2"
MAX_BRUTE_BITS = 20


class SolverUnavailable(RuntimeError):
    pass


class SolverProtocolError(RuntimeError):
    pass


@dataclass(frozen=True)
class Sat:
    model: Mapping[str, int] = field(default_factory=dict)

    def __bool__(self):
        return True


@dataclass(frozen=True)
class Unsat:
    def __bool__(self):
        return False


@dataclass(frozen=True)
class Unknown:
    reason: str = "solver-error"

    def __bool__(self):
        return False


@dataclass(frozen=True)
class SolverSession:
    cmd: tuple[str, ...]
    timeout_ms: int = 10_000
    transcript: str | None = None
    stats: dict = field(default_factory=lambda: {"queries": 0, "time_ms": 0.0}, compare=False, repr=False)

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ValueError("timeout must be positive")
        if isinstance(self.cmd, str):
            object.__setattr__(self, "cmd", tuple(shlex.split(self.cmd)))
        if not self.cmd:
            raise ValueError("empty solver command")

    @classmethod
    def from_env(cls, cmd=None, timeout_ms=10_000, transcript=None):
        """Resolve the solver command: explicit, then $ISEXT_SMT_CMD, then z3 on PATH."""
        cmd = cmd or os.environ.get(ENV_VAR)
        if not cmd:
            if shutil.which("z3") is None:
                raise SolverUnavailable(f"no SMT solver configured; set {ENV_VAR} or pass --solver-cmd")
            cmd = DEFAULT_CMD
        sess = cls(tuple(shlex.split(cmd)), timeout_ms, transcript)
        if shutil.which(sess.cmd[0]) is None:
            raise SolverUnavailable(f"solver executable {sess.cmd[0]!r} not found (check {ENV_VAR})")
        return sess


def solver_available(cmd=None):
    try:
        SolverSession.from_env(cmd)
    except SolverUnavailable:
        return False
    return True


def script(decls, assertions, wanted=()):
    out = ["(set-option :produce-models true)", "(set-logic QF_BV)"]
    out += [f"(declare-const {n} (_ BitVec {w}))" for n, w in decls]
    out += [f"(assert {a})" for a in assertions]
    out.append("(check-sat)")
    if wanted:
        out.append(f"(get-value ({' '.join(wanted)}))")
    return "\n".join(out) + "\n"


def check(sess: SolverSession, decls: Sequence[tuple[str, int]], assertions: Sequence[str], wanted=()):
    """Run one closed QF_BV query; returns Sat(model) / Unsat / Unknown."""
    text = script(decls, assertions, wanted)
    widths = dict(decls)
    t0 = time.perf_counter()
    try:
        proc = subprocess.run(
            sess.cmd, input=text, capture_output=True, text=True,
            timeout=sess.timeout_ms / 1000.0,
        )
    except FileNotFoundError:
        raise SolverUnavailable(f"solver executable {sess.cmd[0]!r} not found (check {ENV_VAR})") from None
    except subprocess.TimeoutExpired:
        _record(sess, text, "<timeout>", t0)
        return Unknown("timeout")
    _record(sess, text, proc.stdout, t0)
    lines = [ln.strip() for ln in proc.stdout.splitlines() if ln.strip()]
    if not lines:
        raise SolverProtocolError(f"empty solver response (exit {proc.returncode}): {proc.stderr.strip()[:200]}")
    head = lines[0]
    if head == "unsat":
        return Unsat()
    if head == "unknown":
        return Unknown("solver-error")
    if head.startswith("(error"):
        log.warning("solver error: %s", head)
        return Unknown("solver-error")
    if head != "sat":
        raise SolverProtocolError(f"unexpected solver response {head!r}")
    if not wanted:
        return Sat({})
    model = parse_values(" ".join(lines[1:]), widths)
    missing = [w for w in wanted if w not in model]
    if missing:
        raise SolverProtocolError(f"get-value did not bind {missing}")
    return Sat(model)


def _record(sess, text, reply, t0):
    sess.stats["queries"] += 1
    sess.stats["time_ms"] += (time.perf_counter() - t0) * 1000.0
    if sess.transcript:
        with open(sess.transcript, "a", encoding="utf-8") as fh:
            fh.write(text + ";; ->\n;; " + reply.replace("\n", "\n;; ") + "\n")


# -- response parsing -----------------------------------------------------------

def tokenize(text):
    tok = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch in "()":
            tok.append(ch)
            i += 1
        elif ch.isspace():
            i += 1
        elif ch == "|":
            j = text.index("|", i + 1)
            tok.append(text[i + 1:j])
            i = j + 1
        else:
            j = i
            while j < len(text) and not text[j].isspace() and text[j] not in "()":
                j += 1
            tok.append(text[i:j])
            i = j
    return tok


def parse_sexpr(text):
    stack = [[]]
    for t in tokenize(text):
        if t == "(":
            stack.append([])
        elif t == ")":
            if len(stack) == 1:
                raise SolverProtocolError("unbalanced ')'")
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(t)
    if len(stack) != 1:
        raise SolverProtocolError("unbalanced '('")
    return stack[0]


def parse_bv(v) -> int:
    """Parse ``#x..``, ``#b..`` or ``(_ bvN W)``."""
    if isinstance(v, list):
        if len(v) == 3 and v[0] == "_" and v[1].startswith("bv"):
            return int(v[1][2:])
        raise SolverProtocolError(f"bad bitvector value {v!r}")
    if v.startswith("#x"):
        return int(v[2:], 16)
    if v.startswith("#b"):
        return int(v[2:], 2)
    raise SolverProtocolError(f"bad bitvector value {v!r}")


def parse_values(text, widths=None) -> dict[str, int]:
    out = {}
    for top in parse_sexpr(text):
        if not isinstance(top, list):
            raise SolverProtocolError(f"unexpected token {top!r} in get-value reply")
        for pair in top:
            if not isinstance(pair, list) or len(pair) != 2 or not isinstance(pair[0], str):
                raise SolverProtocolError(f"bad get-value binding {pair!r}")
            out[pair[0]] = parse_bv(pair[1])
    return out


# -- enumeration oracle -------------------------------------------------------------

def brute_check(decls, predicates: Sequence[Callable], vectorized=False, domains=None):
    """Exhaustively search assignments to ``decls`` satisfying all predicates.

    Predicates take a ``name -> value`` mapping.  With ``vectorized=True``
    they receive uint64 arrays covering the whole space at once and return
    boolean arrays.  ``domains`` optionally restricts a name to listed values.
    """
    domains = dict(domains or {})
    spaces = []
    for name, width in decls:
        dom = domains.get(name)
        spaces.append(list(dom) if dom is not None else range(1 << width))
    total = 1
    for s in spaces:
        total *= len(s)
    if total > 1 << MAX_BRUTE_BITS:
        raise ValueError(f"search space of {total} assignments is too large to enumerate")
    names = [n for n, _ in decls]
    if vectorized:
        if not names:
            ok = all(bool(np.all(p({}))) for p in predicates)
            return Sat({}) if ok else Unsat()
        grids = np.meshgrid(*[np.asarray(s, dtype=np.uint64) for s in spaces], indexing="ij")
        env = {n: g.ravel() for n, g in zip(names, grids)}
        mask = np.ones(total, dtype=bool)
        for p in predicates:
            mask &= np.asarray(p(env), dtype=bool)
            if not mask.any():
                return Unsat()
        k = int(np.argmax(mask))
        return Sat({n: int(env[n][k]) for n in names})
    for combo in itertools.product(*spaces):
        env = dict(zip(names, combo))
        if all(p(env) for p in predicates):
            return Sat(env)
    return Unsat()
