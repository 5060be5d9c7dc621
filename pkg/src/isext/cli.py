"""Command-line driver: ``isext {extract,cluster,functions,subsume,pipeline,report}``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from . import __version__
from .candidate import (cluster_to_function, dedupe_structural, duplicates, format_functions, load_functions,
                        retarget_fn)
from .clustering import clone_and_combine
from .ddg import DDGError, load_ddg, retarget
from .miso import ArchConstraints, max_miso
from .report import CoverReport, SetReport, base_size, code_size, cover_csv, set_csv, subsume_csv, summary
from .smt import SolverProtocolError, SolverSession, SolverUnavailable
from .subsume import BruteForce, minimize_set

log = logging.getLogger("isext")

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_INCONCLUSIVE = 0, 1, 2, 3


class InputError(Exception):
    pass


@dataclass
class PipelineConfig:
    width: int | None = None  # None keeps each file's declared width
    max_inputs: tuple[int, int] = (6, 6)
    cluster: bool = True
    solver_cmd: str | None = None
    timeout_ms: int = 10_000
    max_iters: int = 64
    oracle: str = "smt"
    inputs: list = field(default_factory=list)
    out: str = "out"
    timing: bool = True
    jobs: int = 1
    random_checks: int = 100_000


def parse_range(text: str) -> tuple[int, int]:
    try:
        if ":" in text:
            lo, hi = (int(t) for t in text.split(":", 1))
        else:
            lo = hi = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected K or LO:HI, got {text!r}") from None
    if lo < 1 or hi < lo:
        raise argparse.ArgumentTypeError(f"bad range {text!r}")
    return lo, hi


def _collect(paths, suffix):
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            found = sorted(p.rglob(f"*{suffix}"))
            if not found:
                raise InputError(f"{p}: no {suffix} files")
            files += found
        elif p.is_file():
            files.append(p)
        else:
            raise InputError(f"{p}: no such file or directory")
    if not files:
        raise InputError("no input files")
    return files


def load_ddgs(cfg):
    out = []
    for p in _collect(cfg.inputs, ".ddg"):
        g = load_ddg(p)
        out.append(retarget(g, cfg.width) if cfg.width else g)
    return out


def load_candidates(cfg):
    out = []
    for p in _collect(cfg.inputs, ".fn"):
        for f in load_functions(p):
            out.append(retarget_fn(f, cfg.width) if cfg.width else f)
    names = [f.name for f in out]
    dup = {n for n in names if names.count(n) > 1}
    if dup:
        raise InputError(f"duplicate function names: {sorted(dup)}")
    return out


def make_solver(cfg):
    if cfg.oracle == "brute":
        return BruteForce()
    return SolverSession.from_env(cfg.solver_cmd, cfg.timeout_ms)


# -- stages ---------------------------------------------------------------------

def extract(g, k, cluster):
    """MaxMISO (optionally followed by common-op clustering) and its report."""
    ac = ArchConstraints(max_inputs=k)
    mm = max_miso(g, ac)
    cl = clone_and_combine(mm, ac)
    final = cl if cluster else mm
    rep = CoverReport(g.name, k, base_size(g), code_size(g, mm), code_size(g, cl), mm, cl)
    return final, rep


def name_clusters(cg, counter):
    """ci<N> names for multi-node clusters, in topological order."""
    named = []
    for c in cg.ordered():
        if len(c.members) < 2:
            continue
        counter[0] += 1
        named.append((f"ci{counter[0]}", c))
    return named


def listing(g, k, cg, named, dups):
    lines = [f"# {g.name} max_inputs={k} clusters={len(cg)} size={code_size(g, cg)}"]
    names = {c.root: n for n, c in named}
    for c in cg.ordered():
        label = names.get(c.root, "-")
        members = " ".join(sorted(c.members))
        extra = f"  same-as={dups[label]}" if label in dups else ""
        lines.append(f"{label:<6} root={c.root} inputs=[{' '.join(c.inputs)}] members=[{members}]{extra}")
    unc = cg.uncovered()
    if unc:
        lines.append(f"uncovered: {' '.join(unc)}")
    return "\n".join(lines) + "\n"


def run_extract(cfg, out: Path, force_cluster=None):
    cluster = cfg.cluster if force_cluster is None else force_cluster
    ddgs = load_ddgs(cfg)
    lo, hi = cfg.max_inputs
    reports, texts, cands = [], [], {}
    for k in range(lo, hi + 1):
        counter = [0]
        fns = []
        for g in ddgs:
            cg, rep = extract(g, k, cluster)
            reports.append(rep)
            named = name_clusters(cg, counter)
            fs = [cluster_to_function(g, c, n) for n, c in named]
            fns += fs
            texts.append(listing(g, k, cg, named, duplicates(fs)))
        cands[k] = fns
    written = [
        _write(out / "clusters.txt", "\n".join(texts)),
        _write(out / "cover.csv", cover_csv(reports)),
    ]
    for k, fns in cands.items():
        kept = dedupe_structural(fns)
        suffix = "" if lo == hi else f".k{k}"
        written.append(_write(out / f"functions{suffix}.fn", format_functions(kept)))
        log.info("max_inputs=%d: %d instruction(s), %d distinct", k, len(fns), len(kept))
    return reports, cands, written


def run_subsume(cfg, out: Path, cands=None, set_name="candidates", suffix=""):
    if cands is None:
        cands = load_candidates(cfg)
    deduped = dedupe_structural(cands)
    solver = make_solver(cfg)
    res = minimize_set(deduped, solver, cfg.max_iters, jobs=cfg.jobs, random_checks=cfg.random_checks)
    sr = SetReport(set_name, len(deduped), len(res.kept), res.removed)
    results = sorted(res.results.values(), key=lambda r: (r.f, r.g))
    written = [
        _write(out / f"subsumption{suffix}.csv", subsume_csv(results, cfg.timing)),
        _write(out / f"kept{suffix}.fn", format_functions(res.kept)),
    ]
    lines = [f"{g.name} = {f.name}({w})" for g, f, w in res.removed]
    written.append(_write(out / f"removed{suffix}.txt", "\n".join(lines) + ("\n" if lines else "")))
    return sr, res, written


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="")
    return path


def _digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(cfg, out: Path, inputs, outputs):
    data = {
        "tool": "isext",
        "version": __version__,
        "config": {k: v for k, v in asdict(cfg).items() if k != "inputs"},
        "inputs": {str(p): _digest(p) for p in inputs},
        "outputs": {p.name: _digest(p) for p in sorted(outputs)},
    }
    if not cfg.timing:
        data["config"].pop("timing", None)
    return _write(out / "manifest.json", json.dumps(data, indent=2, sort_keys=True) + "\n")


# -- commands ---------------------------------------------------------------------

def cmd_extract(cfg):
    out = Path(cfg.out)
    reports, cands, _ = run_extract(cfg, out)
    for k, fns in cands.items():
        print(f"max_inputs={k}: {len(dedupe_structural(fns))} named instruction(s)")
    sys.stdout.write(summary(reports))
    return EXIT_OK


def cmd_cluster(cfg):
    out = Path(cfg.out)
    reports, _, _ = run_extract(cfg, out, force_cluster=True)
    sys.stdout.write(summary(reports))
    return EXIT_OK


def cmd_functions(cfg):
    out = Path(cfg.out)
    _, cands, written = run_extract(cfg, out)
    for p in written:
        if p.suffix == ".fn":
            print(p)
    return EXIT_OK


def cmd_subsume(cfg):
    out = Path(cfg.out)
    sr, res, written = run_subsume(cfg, out, set_name=_set_name(cfg.inputs))
    _write(out / "sets.csv", set_csv([sr]))
    print(f"{sr.name}: {sr.before} -> {sr.after} (x{sr.factor:.2f})")
    print("kept: " + " ".join(f.name for f in res.kept))
    for g, f, w in res.removed:
        print(f"removed: {g.name} = {f.name}({w})")
    if res.inconclusive:
        for r in res.inconclusive:
            print(f"inconclusive: {r.f} over {r.g} ({r.reason})")
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def _set_name(paths):
    names = [Path(p).stem or Path(p).name for p in paths]
    return "+".join(names) if names else "candidates"


def cmd_pipeline(cfg):
    out = Path(cfg.out)
    try:
        reports, cands, written = run_extract(cfg, out)
    except (DDGError, InputError) as e:
        raise StageError("extract", e) from e
    inputs = _collect(cfg.inputs, ".ddg")
    set_reports = []
    inconclusive = False
    lo, hi = cfg.max_inputs
    for k, fns in cands.items():
        suffix = "" if lo == hi else f".k{k}"
        try:
            sr, res, w = run_subsume(cfg, out, cands=fns, set_name=f"k{k}", suffix=suffix)
        except (SolverUnavailable, SolverProtocolError, ValueError) as e:
            raise StageError("subsume", e) from e
        written += w
        set_reports.append(sr)
        inconclusive |= bool(res.inconclusive)
        print(f"max_inputs={k}: {sr.before} -> {sr.after} instruction(s), kept "
              + " ".join(f.name for f in res.kept))
    written.append(_write(out / "sets.csv", set_csv(set_reports)))
    text = summary(reports) + "".join(f"set {s.name}: {s.before} -> {s.after} (x{s.factor:.2f})\n"
                                      for s in set_reports)
    written.append(_write(out / "summary.txt", text))
    write_manifest(cfg, out, inputs, written)
    return EXIT_INCONCLUSIVE if inconclusive else EXIT_OK


def cmd_report(cfg):
    out = Path(cfg.out)
    ddgs = load_ddgs(cfg)
    lo, hi = cfg.max_inputs
    reports = []
    for g in ddgs:
        for k in range(lo, hi + 1):
            reports.append(extract(g, k, True)[1])
    _write(out / "cover.csv", cover_csv(reports))
    _write(out / "summary.txt", summary(reports))
    sys.stdout.write(summary(reports))
    return EXIT_OK


COMMANDS = {
    "extract": cmd_extract,
    "cluster": cmd_cluster,
    "functions": cmd_functions,
    "subsume": cmd_subsume,
    "pipeline": cmd_pipeline,
    "report": cmd_report,
}


class StageError(Exception):
    def __init__(self, stage, err):
        super().__init__(f"{stage}: {err}")
        self.stage = stage
        self.err = err


def build_parser():
    ap = argparse.ArgumentParser(prog="isext", description="Custom-instruction synthesis and set reduction.")
    ap.add_argument("--version", action="version", version=f"isext {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("inputs", nargs="+", help=".ddg/.fn files or directories")
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--width", type=int)
        p.add_argument("--max-inputs", type=parse_range, metavar="K|LO:HI")
        p.add_argument("--cluster", dest="cluster", action="store_true", default=None)
        p.add_argument("--no-cluster", dest="cluster", action="store_false")
        p.add_argument("--solver-cmd")
        p.add_argument("--timeout-ms", type=int)
        p.add_argument("--max-iters", type=int)
        p.add_argument("--oracle", choices=["smt", "brute"])
        p.add_argument("--jobs", type=int)
        p.add_argument("--out")
        p.add_argument("--no-timing", dest="timing", action="store_false", default=None)
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def make_config(args) -> PipelineConfig:
    cfg = PipelineConfig()
    if args.config:
        data = yaml.safe_load(Path(args.config).read_text(encoding="utf-8")) or {}
        solver = data.get("solver") or {}
        cfg.solver_cmd = solver.get("cmd", cfg.solver_cmd)
        cfg.timeout_ms = int(solver.get("timeout_ms", cfg.timeout_ms))
        cfg.max_iters = int((data.get("cegis") or {}).get("max_iters", cfg.max_iters))
        if "max_inputs" in data:
            cfg.max_inputs = parse_range(str(data["max_inputs"]))
        for key in ("width", "oracle", "out", "jobs", "cluster"):
            if key in data:
                setattr(cfg, key, data[key])
    if args.command == "subsume":
        cfg.cluster = False
    overrides = {
        "width": args.width, "max_inputs": args.max_inputs, "cluster": args.cluster,
        "solver_cmd": args.solver_cmd, "timeout_ms": args.timeout_ms, "max_iters": args.max_iters,
        "oracle": args.oracle, "jobs": args.jobs, "out": args.out, "timing": args.timing,
    }
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
    if args.command == "extract" and args.cluster is None and not args.config:
        cfg.cluster = False
    cfg.inputs = list(args.inputs)
    if cfg.timeout_ms <= 0 or cfg.max_iters <= 0:
        raise InputError("--timeout-ms and --max-iters must be positive")
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = make_config(args)
        return COMMANDS[args.command](cfg)
    except StageError as e:
        print(f"isext: stage {e.stage} failed: {e.err}", file=sys.stderr)
        if isinstance(e.err, SolverUnavailable):
            return EXIT_SOLVER
        return EXIT_INPUT
    except SolverUnavailable as e:
        print(f"isext: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except (DDGError, InputError, OSError, ValueError, SolverProtocolError) as e:
        print(f"isext: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
