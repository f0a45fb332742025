"""``omegastar`` command line.

Exit codes: 0 success, 1 verification failure, 2 input or module error
(JSON on stderr), 3 partial result.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

from . import __version__
from .chaingraph import (chain_components, chain_graph, equivalence_oracle, find_trapping_set,
                         is_chain_transitive, to_dot, EXHAUSTIVE_CAP, ORACLE_MAX)
from .errors import BadParams, OmegaStarError, PrefixExhausted
from .geometry import fmt, grid_cover, rational, refines
from .orbits import (LOOPS_PER_STAGE, ComplianceCertificate, bowen_sharkovsky, generic_builder,
                     sequence_csv, verify_certificate)
from .shiftlab import (PREDICTED, canonical_candidates, harmonic_walk,
                       lifting_obstruction_check, read_prefix_map, refute_conjugacy, FIBER_CAP)
from .systems import DEFAULT_SIZE_CAP, load_system

OK, VERIFY_FAILED, INPUT_ERROR, PARTIAL = 0, 1, 2, 3

DEFAULT_MESHES = ("1/4", "1/8")


@dataclass
class RunConfig:
    command: str
    system: str | None = None
    meshes: tuple = ()
    base: int = 0
    cert: str | None = None
    map: str | None = None
    size: int = 32
    n: int | None = None
    m: int | None = None
    eps: Fraction = Fraction(1, 10)
    delta: Fraction = Fraction(1, 100)
    seed: int = 0
    out: str | None = None
    dot: str | None = None
    loops: int = LOOPS_PER_STAGE
    builder: str = "auto"
    export_format: str | None = None
    cluster: bool = False
    size_cap: int = DEFAULT_SIZE_CAP
    trap_cap: int = EXHAUSTIVE_CAP
    fiber_cap: int = FIBER_CAP
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("size", "loops", "size_cap", "trap_cap", "fiber_cap"):
            if getattr(self, name) <= 0:
                raise BadParams(f"{name} must be positive")
        if self.n is not None and self.n <= 0:
            raise BadParams("n must be positive")
        if self.base < 0:
            raise BadParams("base must be a non-negative index")
        if not 0 <= self.seed < 2**64:
            raise BadParams("seed must fit in 64 bits")
        self.meshes = tuple(rational(m) for m in self.meshes)
        if any(m <= 0 for m in self.meshes):
            raise BadParams("meshes must be positive")
        if any(b >= a for a, b in zip(self.meshes, self.meshes[1:])):
            raise BadParams("meshes must strictly decrease along the ladder")
        self.eps, self.delta = rational(self.eps), rational(self.delta)

    def to_json(self) -> dict:
        out = asdict(self)
        out["meshes"] = [fmt(m) for m in self.meshes]
        out["eps"], out["delta"] = fmt(self.eps), fmt(self.delta)
        out.pop("extra")
        return out


# ---------------------------------------------------------------------------
# output


def _default(obj):
    if isinstance(obj, Fraction):
        return fmt(obj)
    if isinstance(obj, (set, frozenset, tuple)):
        return list(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, default=_default) + "\n"


def write_atomic(path, text: str) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _emit(cfg: RunConfig, text: str) -> None:
    if cfg.out:
        write_atomic(cfg.out, text)
    else:
        sys.stdout.write(text)


def _header(cfg: RunConfig) -> dict:
    return {"tool": {"name": "omegastar", "version": __version__}, "config": cfg.to_json()}


def _need(value, flag: str):
    if value is None:
        raise BadParams(f"{flag} is required for this command")
    return value


def _meshes(cfg: RunConfig) -> tuple:
    return cfg.meshes or tuple(rational(m) for m in DEFAULT_MESHES)


# ---------------------------------------------------------------------------
# commands


def cmd_analyze(cfg: RunConfig) -> int:
    sysm = load_system(_need(cfg.system, "--system"), cfg.size_cap)
    per_mesh = {}
    finest = None
    for mesh in _meshes(cfg):
        cover = grid_cover(sysm.sample, mesh, sysm.coords)
        g = chain_graph(sysm, cover)
        comps = chain_components(g)
        trap = find_trapping_set(sysm, cover, cfg.trap_cap)
        per_mesh[fmt(mesh)] = {
            "boxes": len(cover),
            "edges": sum(len(r) for r in g.edges),
            "chain_transitive": is_chain_transitive(g),
            "components": [list(c) for c in comps.classes],
            "terminal_components": list(comps.terminal),
            "trapping": trap.to_json(),
        }
        finest = g
    report = _header(cfg)
    report["system"] = {"meta": sysm.meta, "size": len(sysm), "mesh": fmt(sysm.mesh),
                        "coords": list(sysm.coords)}
    report["covers"] = per_mesh
    for key in ("chain_transitive", "components"):
        report[key] = {m: v[key] for m, v in per_mesh.items()}
    report["trapping"] = {m: v["trapping"]["trapping"] for m, v in per_mesh.items()}
    report["weakly_incompressible"] = {m: v["trapping"]["weakly_incompressible"]
                                       for m, v in per_mesh.items()}
    if sysm.mesh == 0 and len(sysm) <= ORACLE_MAX:
        report["equivalence"] = equivalence_oracle(sysm).to_json()
    _emit(cfg, dumps(report))
    if cfg.dot:
        write_atomic(cfg.dot, to_dot(finest, sysm, cluster=cfg.cluster))
    return OK


def cmd_build(cfg: RunConfig) -> int:
    sysm = load_system(_need(cfg.system, "--system"), cfg.size_cap)
    if cfg.base >= len(sysm):
        raise BadParams(f"base index {cfg.base} outside the sample of {len(sysm)}")
    covers = [grid_cover(sysm.sample, m, sysm.coords) for m in _meshes(cfg)]
    nested = all(refines(b, a) for a, b in zip(covers, covers[1:]))
    builder = cfg.builder
    if builder == "auto":
        builder = "bowen_sharkovsky" if nested else "generic"
    if builder == "bowen_sharkovsky":
        cert = bowen_sharkovsky(sysm, cfg.base, covers, cfg.loops)
    else:
        cert = generic_builder(sysm, cfg.base, covers, cfg.loops)
    cert.meta.update(_header(cfg))
    _emit(cfg, cert.dumps() + "\n")
    return OK


def cmd_verify(cfg: RunConfig) -> int:
    sysm = load_system(_need(cfg.system, "--system"), cfg.size_cap)
    path = _need(cfg.cert, "--cert")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise BadParams(f"cannot read certificate {path}: {exc}") from exc
    cert = ComplianceCertificate.loads(text)
    result = verify_certificate(cert, sysm)
    report = _header(cfg)
    report.update(result.to_json())
    _emit(cfg, dumps(report))
    return OK if result.ok else VERIFY_FAILED


def cmd_refute(cfg: RunConfig) -> int:
    q = read_prefix_map(_need(cfg.map, "--map"))
    if cfg.n is not None:
        q = type(q)(q.values[:cfg.n])
    report = _header(cfg)
    try:
        witness = refute_conjugacy(q, cfg.size, cfg.fiber_cap)
    except PrefixExhausted as exc:
        report.update(exc.witness.to_json())
        report["partial"] = True
        _emit(cfg, dumps(report))
        _error(exc)
        return PARTIAL
    report.update(witness.to_json())
    report["partial"] = False
    _emit(cfg, dumps(report))
    return OK


def cmd_demo_lifting(cfg: RunConfig) -> int:
    n = cfg.n if cfg.n is not None else 10**5
    m = cfg.m if cfg.m is not None else max(1, n // 2)
    walk = harmonic_walk(n)
    rows = {}
    for name, candidate in canonical_candidates(walk).items():
        res = lifting_obstruction_check(candidate, m, cfg.delta, cfg.eps, walk)
        res["predicted"] = PREDICTED[name]
        res["as_predicted"] = res["failed"] == PREDICTED[name]
        rows[name] = res
    stabilized = all(r["as_predicted"] for r in rows.values())
    report = _header(cfg)
    report.update({"n": n, "m": m, "candidates": rows, "stabilized": stabilized,
                   "walk_error_bound": walk.error_bound})
    if not stabilized:
        report["note"] = "thresholds not yet stabilized: some verdict differs from the prediction"
    _emit(cfg, dumps(report))
    if cfg.out:
        sys.stdout.write(_lifting_table(rows, stabilized))
    return OK


def _lifting_table(rows: dict, stabilized: bool) -> str:
    lines = [f"{'candidate':<14}{'slowness':<10}{'matching':<11}{'escape':<8}predicted"]
    for name, r in rows.items():
        s = r["status"]
        mark = "ok" if r["as_predicted"] else "DIFFERS"
        lines.append(f"{name:<14}{s['slowness']:<10}{s['matching']:<11}{s['escape']:<8}"
                     f"{','.join(r['predicted'])} ({mark})")
    if not stabilized:
        lines.append("thresholds not yet stabilized")
    return "\n".join(lines) + "\n"


def cmd_export(cfg: RunConfig) -> int:
    if cfg.export_format == "dot":
        sysm = load_system(_need(cfg.system, "--system"), cfg.size_cap)
        meshes = _meshes(cfg)
        g = chain_graph(sysm, grid_cover(sysm.sample, meshes[-1], sysm.coords))
        _emit(cfg, to_dot(g, sysm, cluster=cfg.cluster))
    else:
        path = _need(cfg.cert, "--cert")
        try:
            cert = ComplianceCertificate.loads(Path(path).read_text())
        except OSError as exc:
            raise BadParams(f"cannot read certificate {path}: {exc}") from exc
        _emit(cfg, sequence_csv(cert.sequence))
    return OK


COMMANDS = {"analyze": cmd_analyze, "build": cmd_build, "verify": cmd_verify,
            "refute": cmd_refute, "demo-lifting": cmd_demo_lifting, "export": cmd_export}


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise BadParams(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--system", help="system spec JSON")
    common.add_argument("--mesh", action="append", default=[],
                        help="grid mesh as a rational; repeat for a ladder, coarsest first")
    common.add_argument("--base", type=int, default=0, help="index of the base point")
    common.add_argument("--cert", help="certificate JSON")
    common.add_argument("--map", help="prefix map CSV (rows n,q(n))")
    common.add_argument("--size", type=int, default=32, help="witness size k for refute")
    common.add_argument("--n", type=int, help="walk length (demo-lifting) or prefix cut (refute)")
    common.add_argument("--m", type=int, help="tail start for demo-lifting (default n//2)")
    common.add_argument("--eps", default="1/10")
    common.add_argument("--delta", default="1/100")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--dot", help="also write the finest chain graph as DOT")
    common.add_argument("--cluster", action="store_true", help="group DOT vertices by class")
    common.add_argument("--loops", type=int, default=LOOPS_PER_STAGE, help="loops per stage")
    common.add_argument("--builder", choices=("auto", "bowen_sharkovsky", "generic"),
                        default="auto")
    common.add_argument("--size-cap", type=int, default=DEFAULT_SIZE_CAP)
    common.add_argument("--trap-cap", type=int, default=EXHAUSTIVE_CAP)
    common.add_argument("--fiber-cap", type=int, default=FIBER_CAP)

    parser = _Parser(prog="omegastar", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"omegastar {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "export":
            p.add_argument("format", choices=("dot", "csv"))
    return parser


def config_from_args(argv) -> RunConfig:
    ns = build_parser().parse_args(argv)
    return RunConfig(
        command=ns.command, system=ns.system, meshes=tuple(ns.mesh), base=ns.base,
        cert=ns.cert, map=ns.map, size=ns.size, n=ns.n, m=ns.m, eps=ns.eps, delta=ns.delta,
        seed=ns.seed, out=ns.out, dot=ns.dot, loops=ns.loops, builder=ns.builder,
        export_format=getattr(ns, "format", None), cluster=ns.cluster,
        size_cap=ns.size_cap, trap_cap=ns.trap_cap, fiber_cap=ns.fiber_cap)


def _error(exc: OmegaStarError) -> None:
    sys.stderr.write(json.dumps(exc.to_json(), sort_keys=True) + "\n")


def run(cfg: RunConfig) -> int:
    return COMMANDS[cfg.command](cfg)


def main(argv=None) -> int:
    try:
        cfg = config_from_args(sys.argv[1:] if argv is None else argv)
        return run(cfg)
    except OmegaStarError as exc:
        _error(exc)
        return INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
