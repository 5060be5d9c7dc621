"""Custom-instruction identification and SMT-based instruction-set reduction."""

__version__ = "0.1.0"

from .candidate import CandidateInstruction, cluster_to_function, dedupe_structural, load_functions
from .clustering import clone_and_combine
from .ddg import DDG, DDGError, Node, build_ddg, eval_ddg, load_ddg, parse_ddg
from .miso import ArchConstraints, Cluster, ClusterGraph, max_miso
from .report import CoverReport, SetReport, code_size, cover_report
from .smt import SolverSession, SolverUnavailable
from .subsume import BruteForce, SubsumeResult, Witness, minimize_set, subsume

__all__ = [
    "ArchConstraints", "BruteForce", "CandidateInstruction", "Cluster", "ClusterGraph", "CoverReport",
    "DDG", "DDGError", "Node", "SetReport", "SolverSession", "SolverUnavailable", "SubsumeResult", "Witness",
    "build_ddg", "clone_and_combine", "cluster_to_function", "code_size", "cover_report", "dedupe_structural",
    "eval_ddg", "load_ddg", "load_functions", "max_miso", "minimize_set", "parse_ddg", "subsume",
]
