"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the summary lines are
repeated at the end of the session) or directly with
``python3 tests/test_acceptance.py``.
"""
import itertools
import json
import random
import sys
import time
from contextlib import contextmanager
from fractions import Fraction as F
from pathlib import Path

import pytest

from omegastar.chaingraph import chain_graph, equivalence_oracle
from omegastar.errors import NotChainTransitive
from omegastar.cli import main
from omegastar.geometry import (Point, common_refinement, grid_cover, is_full_refinement,
                                refines)
from omegastar.orbits import (ComplianceCertificate, CoverContext, bowen_sharkovsky, decompose,
                              generic_builder, is_compliant_loop, perturb_invariance_check,
                              verify_certificate)
from omegastar.shiftlab import PrefixMap, harmonic_walk, induced_shift_gap, refute_conjugacy
from omegastar.systems import make_zoo_system, omega_limit_approx, product, system_from_spec

sys.path.insert(0, str(Path(__file__).parent))
from conftest import functional  # noqa: E402

RESULTS: dict = {}

LADDER = [f"1/{2 ** k}" for k in range(1, 7)]
CERT_SPECS = {
    "tent": {"kind": "tent", "resolution": "1/128"},
    "identity": {"kind": "identity", "resolution": "1/128"},
    "rotation": {"kind": "rotation", "resolution": "1/128", "params": {"angle": "1/3"}},
    "onepoint": {"kind": "onepoint_shift",
                 "params": {"y_points": [{"0": "0"}, {"0": "1/2"}, {"0": "1"}], "n_max": 8}},
}


@contextmanager
def criterion(number, text):
    start = time.perf_counter()
    line = None
    try:
        yield
    except BaseException as exc:
        line = f"[criterion {number}] FAIL  {text} ({type(exc).__name__}: {str(exc)[:160]})"
        raise
    else:
        line = f"[criterion {number}] PASS  {text}"
    finally:
        line += f"  [{time.perf_counter() - start:.1f}s]"
        RESULTS[number] = line
        print(line)


# -- 1 -------------------------------------------------------------------------

def test_criterion_1_equivalence_suite():
    with criterion(1, "SCC verdict agrees with brute-force invariant subsets"):
        start = time.perf_counter()
        checked = discrepancies = 0
        for n in range(1, 7):
            for images in itertools.product(range(n), repeat=n):
                checked += 1
                discrepancies += not equivalence_oracle(functional(list(images))).agree
        rng = random.Random(1)
        for _ in range(500):
            n = rng.randint(1, 12)
            checked += 1
            images = [rng.randrange(n) for _ in range(n)]
            discrepancies += not equivalence_oracle(functional(images)).agree
        elapsed = time.perf_counter() - start
        assert checked == sum(n**n for n in range(1, 7)) + 500
        assert discrepancies == 0, f"{discrepancies} discrepancies"
        assert elapsed < 60, f"took {elapsed:.1f}s"


# -- 2 -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def certificate_corpus(tmp_path_factory):
    """Certificates built and verified through the CLI for the four systems."""
    root = tmp_path_factory.mktemp("certs")
    corpus, reports = {}, {}
    start = time.perf_counter()
    for name, spec in CERT_SPECS.items():
        sys_path = root / f"{name}.json"
        sys_path.write_text(json.dumps(spec))
        cert_path, rep_path = root / f"{name}.cert.json", root / f"{name}.verify.json"
        args = ["build", "--system", str(sys_path), "--base", "0", "--out", str(cert_path)]
        for m in LADDER:
            args += ["--mesh", m]
        build_rc = main(args)
        verify_rc = main(["verify", "--system", str(sys_path), "--cert", str(cert_path),
                          "--out", str(rep_path)])
        corpus[name] = (system_from_spec(spec), cert_path)
        report = json.loads(rep_path.read_text()) if rep_path.exists() else None
        reports[name] = (build_rc, verify_rc, report)
    return corpus, reports, time.perf_counter() - start


def test_criterion_2_bowen_sharkovsky_certificates(certificate_corpus):
    corpus, reports, elapsed = certificate_corpus
    with criterion(2, f"build + verify at meshes 1/2..1/64 for four systems "
                      f"(CLI time {elapsed:.1f}s)"):
        for name, (build_rc, verify_rc, rep) in reports.items():
            assert build_rc == 0 and verify_rc == 0, name
            checks = rep["checks"]
            assert checks["covers"] == len(LADDER)
            assert checks["blocks_hitting_every_box"] == checks["loops"] > 0, name
        for name, (sysm, path) in corpus.items():
            cert = ComplianceCertificate.loads(path.read_text())
            for i, cover in enumerate(cert.ladder):
                ctx = CoverContext(sysm, cover)
                for a, b in cert.segments(i):
                    w = is_compliant_loop(cert.sequence[a + 1:b + 1], cover, cert.base, sysm, ctx)
                    assert not w.diagnostics["missed_boxes"], (name, i, a)
        assert elapsed < 120, f"took {elapsed:.1f}s"


# -- 3 -------------------------------------------------------------------------

def _random_system(rng):
    kind = rng.choice(["tent", "identity", "rotation", "doubling"])
    res = f"1/{rng.choice([16, 24, 32])}"
    return make_zoo_system(kind, {"angle": f"{rng.randrange(8)}/8"}, res)


def test_criterion_3_refinement_monotonicity():
    with criterion(3, "200 full refinements: edges and loops transfer"):
        rng = random.Random(3)
        failures = loops_checked = 0
        for _ in range(200):
            s = _random_system(rng)
            a = rng.choice([2, 3, 4])
            u = grid_cover(s.sample, F(1, a))
            if rng.random() < 0.5:
                v = grid_cover(s.sample, F(1, a * rng.choice([2, 4])))
            else:
                w = grid_cover(s.sample, F(1, rng.choice([3, 5, 6, 7])), offset=F(rng.randrange(5), 20))
                v = common_refinement(u, w, s.sample)
            assert is_full_refinement(v, u)
            gu, gv = chain_graph(s, u), chain_graph(s, v)
            failures += not gv.edge_set() <= gu.edge_set()
            try:
                cert = bowen_sharkovsky(s, rng.randrange(len(s)), [v], loops_per_stage=1)
            except NotChainTransitive:
                continue  # v not chain transitive: no loops to transfer
            ctx_u, ctx_v = CoverContext(s, u), CoverContext(s, v)
            for x, y in cert.segments(0):
                seg = cert.sequence[x + 1:y + 1]
                if is_compliant_loop(seg, v, cert.base, s, ctx_v).verified:
                    loops_checked += 1
                    failures += not is_compliant_loop(seg, u, cert.base, s, ctx_u).verified
        assert loops_checked > 0
        assert failures == 0, f"{failures} failures"


# -- 4 -------------------------------------------------------------------------

def test_criterion_4_coordinate_locality(certificate_corpus):
    with criterion(4, "100 off-support perturbations per witness: no verdict flips"):
        corpus, _, _ = certificate_corpus
        items = [(s, ComplianceCertificate.loads(p.read_text())) for s, p in corpus.values()]
        # a product whose covers ignore the second factor's coordinate
        prod = product(make_zoo_system("tent", resolution="1/16"),
                       make_zoo_system("rotation", {"angle": "1/3"}, "1/3"))
        ladder = [grid_cover(prod.sample, F(1, 2**k), coords=(0,)) for k in range(1, 4)]
        items.append((prod, bowen_sharkovsky(prod, 0, ladder)))
        flips = witnesses = 0
        for n, (s, cert) in enumerate(items):
            for i, cover in enumerate(cert.ladder):
                ctx = CoverContext(s, cover)
                for j, (a, b) in enumerate(cert.segments(i)):
                    w = is_compliant_loop(cert.sequence[a + 1:b + 1], cover, cert.base, s, ctx)
                    rep = perturb_invariance_check(w, s, trials=100, seed=1000 * n + 10 * i + j,
                                                   ctx=ctx)
                    witnesses += 1
                    flips += len(rep.flips)
        assert witnesses > 0
        assert flips == 0, f"{flips} flips"


# -- 5 -------------------------------------------------------------------------

N5 = 10**5


def test_criterion_5a_harmonic_slowness():
    with criterion("5a", "sup |p(k+1)-p(k)| <= 1/m for m in 10, 100, 1000"):
        w = harmonic_walk(N5)
        for m in (10, 100, 1000):
            worst = F(0)
            for k in range(m, N5):
                d = abs(w.p(k + 1) - w.p(k)) + w.error(k) + w.error(k + 1)
                if d > worst:
                    worst = d
            assert worst <= F(1, m), (m, float(worst))


def test_criterion_5b_tail_density():
    with criterion("5b", "every [j/50,(j+1)/50] meets p(k) for n/2 <= k <= n"):
        w = harmonic_walk(N5)
        m = N5 // 2
        bins = set()
        for k in range(m, N5 + 1):
            lo, hi = w.p(k) - w.error(k), w.p(k) + w.error(k)
            for j in range(max(0, int(lo * 50) - 1), min(50, int(hi * 50) + 2)):
                if F(j, 50) <= hi and lo <= F(j + 1, 50):
                    bins.add(j)
        missing = sorted(set(range(50)) - bins)
        assert not missing, f"{len(missing)} of 50 bins empty, e.g. {missing[:5]}"


def test_criterion_5c_demo_lifting(tmp_path):
    with criterion("5c", "demo-lifting: escape / matching / slowness fail as predicted"):
        out = tmp_path / "demo.json"
        rc = main(["demo-lifting", "--n", str(N5), "--eps", "1/10", "--delta", "1/100",
                   "--out", str(out)])
        rep = json.loads(out.read_text())
        assert rc == 0
        got = {name: row["failed"] for name, row in rep["candidates"].items()}
        assert got == {"first_branch": ["escape"], "constant": ["matching"],
                       "alternating": ["slowness"]}, got
        assert rep["stabilized"]


# -- 6 -------------------------------------------------------------------------

def test_criterion_6_conjugacy_refuter():
    with criterion(6, "|B| >= 32 with q(B+1) and q(B)-1 disjoint; {4,6} control"):
        start = time.perf_counter()
        n = 10**5
        rng = random.Random(6)
        fibers = []
        v = 0
        while len(fibers) < n:
            fibers.extend([v] * rng.randint(1, 3))
            v += 1
        rng.shuffle(fibers)
        maps = {"identity": range(n), "half": [k // 2 for k in range(n)],
                "random": fibers[:n]}
        for name, values in maps.items():
            q = PrefixMap.of(values)
            w = refute_conjugacy(q, 32)
            left = {q(b + 1) for b in w.b}
            right = {q(b) - 1 for b in w.b if q(b) > 0}
            assert len(w.b) >= 32 and not (left & right), name
            assert induced_shift_gap(q, w.b)[2] == ()
        ident = PrefixMap.of(range(100))
        assert induced_shift_gap(ident, [4, 6])[2] == (5,)
        elapsed = time.perf_counter() - start
        assert elapsed < 10, f"took {elapsed:.1f}s"


# -- 7 -------------------------------------------------------------------------

def test_criterion_7_generic_builder(tmp_path):
    with criterion(7, "four non-nested covers: every target met, CLI verify accepts"):
        spec = {"kind": "identity", "resolution": "1/64"}
        s = system_from_spec(spec)
        targets = [grid_cover(s.sample, F(1, 4)), grid_cover(s.sample, F(1, 5)),
                   grid_cover(s.sample, F(1, 6), offset=F(3, 40)),
                   grid_cover(s.sample, F(1, 7), offset=F(3, 40))]
        for a, b in itertools.permutations(targets, 2):
            assert not refines(a, b)
        cert = generic_builder(s, 0, targets)
        for t in targets:
            assert decompose(cert.sequence, t, cert.base, s) is not None
        (tmp_path / "s.json").write_text(json.dumps(spec))
        (tmp_path / "c.json").write_text(cert.dumps())
        rc = main(["verify", "--system", str(tmp_path / "s.json"), "--cert", str(tmp_path / "c.json"),
                   "--out", str(tmp_path / "v.json")])
        assert rc == 0


# -- 8 -------------------------------------------------------------------------

def test_criterion_8_omega_limits():
    with criterion(8, "tent 1/20 from 2/5 gives {2/5, 4/5}; 100 limits invariant"):
        tent = make_zoo_system("tent", resolution="1/20")
        om = omega_limit_approx(tent, tent.index[Point.of({0: F(2, 5)})])
        assert {tent.sample[i][0] for i in om} == {F(2, 5), F(4, 5)}
        rng = random.Random(8)
        for _ in range(100):
            if rng.random() < 0.5:
                s = _random_system(rng)
            else:
                n = rng.randint(1, 30)
                s = functional([rng.randrange(n) for _ in range(n)])
            om = omega_limit_approx(s, rng.randrange(len(s)))
            assert om and all(s.f(i) in om for i in om)


# -- 9 -------------------------------------------------------------------------

def test_criterion_9_determinism_and_round_trip(tmp_path):
    with criterion(9, "byte-identical reruns; 50 certificates round-trip and re-verify"):
        spec_path = tmp_path / "t.json"
        spec_path.write_text(json.dumps({"kind": "tent", "resolution": "1/32"}))
        qmap = tmp_path / "q.csv"
        qmap.write_text("".join(f"{k},{k // 2}\n" for k in range(2000)))
        commands = [
            ["analyze", "--system", str(spec_path), "--mesh", "1/4", "--mesh", "1/8"],
            ["build", "--system", str(spec_path), "--mesh", "1/2", "--mesh", "1/4", "--mesh", "1/8"],
            ["refute", "--map", str(qmap), "--size", "16"],
            ["demo-lifting", "--n", "500"],
        ]
        for cmd in commands:
            blobs = []
            out = tmp_path / f"{cmd[0]}.json"
            for _ in range(2):
                assert main(cmd + ["--out", str(out)]) == 0
                blobs.append(out.read_bytes())
                out.unlink()
            assert blobs[0] == blobs[1], cmd[0]

        rng = random.Random(9)
        done = 0
        while done < 50:
            s = _random_system(rng)
            depth = rng.randint(1, 3)
            ladder = [grid_cover(s.sample, F(1, 2**k)) for k in range(1, depth + 1)]
            try:
                cert = bowen_sharkovsky(s, rng.randrange(len(s)), ladder, rng.randint(1, 3))
            except NotChainTransitive:
                continue
            text = cert.dumps()
            again = ComplianceCertificate.loads(text)
            assert again.dumps() == text
            assert again.sequence == cert.sequence and again.ladder == cert.ladder
            assert again.cuts == cert.cuts and again.thresholds == cert.thresholds
            assert verify_certificate(again, s).ok
            done += 1


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
