import random
from fractions import Fraction as F

import pytest

from omegastar.errors import BadParams, LadderNotRefining, NotChainTransitive
from omegastar.geometry import (Point, grid_cover, is_full_refinement, isolating_cover,
                                membership_matrix, refines)
from omegastar.orbits import (ComplianceCertificate, CoverContext, bowen_sharkovsky,
                              certificate_witnesses, decompose, generic_builder,
                              is_compliant_loop, perturb_invariance_check, sequence_csv,
                              verify_certificate)
from omegastar.systems import DiscreteSystem, make_zoo_system

from conftest import cycle, line_points


def brute_loop(seg, cover, base, sys):
    """The five conditions straight from their definitions, one point at a time."""
    sample = sys.sample

    def boxes_of(p):
        return {k for k, b in enumerate(cover.boxes) if b.contains(p)}

    def step_ok(a, b):
        # b in U*(f(U*(a) & X))
        ua = boxes_of(a)
        xs = [s for s in sample if boxes_of(s) & ua]
        images = [sample[sys.f(sys.index[s])] for s in xs]
        reach = set().union(*(boxes_of(y) for y in images)) if images else set()
        return bool(boxes_of(b) & reach)

    sup = cover.support
    return {
        "1": bool(seg) and seg[-1].project(sup) == base.project(sup),
        "2": bool(seg) and all(boxes_of(p) for p in seg),
        "3": bool(seg) and set().union(*(boxes_of(p) for p in seg)) == set(range(len(cover))),
        "4": bool(seg) and step_ok(base, seg[0]),
        "5": bool(seg) and all(step_ok(a, b) for a, b in zip(seg, seg[1:])),
    }


@pytest.fixture
def tri():
    s = cycle(3)
    return s, isolating_cover(s.sample)


def test_cycle_is_a_loop(tri):
    s, cover = tri
    w = is_compliant_loop([s.sample[1], s.sample[2], s.sample[0]], cover, s.sample[0], s)
    assert w.verified and w.failed == ()


def test_loop_not_ending_at_base(tri):
    s, cover = tri
    w = is_compliant_loop([s.sample[1], s.sample[2], s.sample[0], s.sample[1]], cover,
                          s.sample[0], s)
    assert "1" in w.failed


def test_loop_missing_a_box():
    s = make_zoo_system("identity", resolution="1/8")
    cover = grid_cover(s.sample, F(1, 4))
    seg = [s.sample[1], s.sample[0]]
    w = is_compliant_loop(seg, cover, s.sample[0], s)
    assert w.failed == ("3",) and w.diagnostics["missed_boxes"]


def test_loop_diagnostics_against_brute_force():
    rng = random.Random(3)
    s = make_zoo_system("tent", resolution="1/16")
    cover = grid_cover(s.sample, F(1, 4))
    ctx = CoverContext(s, cover)
    for _ in range(150):
        seg = [s.sample[rng.randrange(len(s))] for _ in range(rng.randint(1, 8))]
        base = s.sample[rng.randrange(len(s))]
        if rng.random() < 0.5:
            seg[-1] = base
        got = is_compliant_loop(seg, cover, base, s, ctx).diagnostics
        want = brute_loop(seg, cover, base, s)
        assert {c: got[c] for c in "12345"} == want


def test_decompose_examples(tri):
    s, cover = tri
    p = s.sample
    loops = [p[1], p[2], p[0]] * 3
    assert decompose([p[0]] + loops, cover, p[0], s) == (0, (0, 3, 6, 9))
    junk = [p[0], p[2], p[2], p[0]]
    m, cuts = decompose(junk + loops, cover, p[0], s)
    assert m == 3 and cuts == (3, 6, 9, 12)
    assert decompose([p[1], p[2], p[1], p[2]], cover, p[0], s) is None


def test_bowen_sharkovsky_three_cycle(tri):
    s, cover = tri
    cert = bowen_sharkovsky(s, 0, [cover], loops_per_stage=3)
    idx = [s.index[p] for p in cert.sequence]
    assert idx == [0, 1, 2, 0, 1, 2, 0, 1, 2, 0]
    assert cert.cuts == ((0, 3, 6, 9),)
    assert verify_certificate(cert, s).ok


def test_bowen_sharkovsky_identity_ladder():
    s = make_zoo_system("identity", resolution="1/16")
    meshes = [F(1, 2), F(1, 4), F(1, 8)]
    ladder = [grid_cover(s.sample, h) for h in meshes]
    cert = bowen_sharkovsky(s, 0, ladder)
    rep = verify_certificate(cert, s)
    assert rep.ok, rep.violations
    seq = cert.sequence
    for m, cover in enumerate(ladder):
        end = cert.thresholds[m + 1] if m + 1 < len(ladder) else len(seq) - 1
        rows = membership_matrix(seq[cert.thresholds[m]:end + 1], cover)
        assert all((a & b).any() for a, b in zip(rows, rows[1:]))


def test_bowen_sharkovsky_errors():
    s = DiscreteSystem(line_points(8), tuple(j // 2 for j in range(9)), F(1, 8))
    with pytest.raises(NotChainTransitive) as exc:
        bowen_sharkovsky(s, 0, [grid_cover(s.sample, F(1, 2))])
    assert exc.value.details["cover_index"] == 0
    t = make_zoo_system("tent", resolution="1/8")
    with pytest.raises(LadderNotRefining):
        bowen_sharkovsky(t, 0, [grid_cover(t.sample, F(1, 4)), grid_cover(t.sample, F(1, 3))])
    with pytest.raises(BadParams):
        bowen_sharkovsky(t, 0, [grid_cover(t.sample, F(1, 4))], loops_per_stage=0)


def test_verify_localises_a_point_outside_the_cover(tri):
    s, cover = tri
    cert = bowen_sharkovsky(s, 0, [cover])
    seq = list(cert.sequence)
    seq[4] = Point.of({0: F(0)})
    bad = ComplianceCertificate(tuple(seq), cert.base, cert.ladder, cert.thresholds, cert.cuts)
    rep = verify_certificate(bad, s)
    loops = [v for v in rep.violations if v["kind"] == "loop"]
    assert loops and loops[0]["segment"] == 1 and "2" in loops[0]["conditions"]


def test_merged_cuts_still_verify():
    s = make_zoo_system("identity", resolution="1/16")
    ladder = [grid_cover(s.sample, h) for h in (F(1, 2), F(1, 4))]
    cert = bowen_sharkovsky(s, 0, ladder, loops_per_stage=2)
    cuts = list(cert.cuts)
    coarse = cuts[0]
    cuts[0] = (coarse[0],) + coarse[2::2] + ((coarse[-1],) if (len(coarse) - 1) % 2 else ())
    merged = ComplianceCertificate(cert.sequence, cert.base, cert.ladder, cert.thresholds,
                                   tuple(cuts))
    assert len(cuts[0]) < len(coarse)
    assert verify_certificate(merged, s).ok


def test_loop_concatenation():
    s = make_zoo_system("rotation", {"angle": "1/3"}, "1/12")
    cover = grid_cover(s.sample, F(1, 4))
    cert = bowen_sharkovsky(s, 0, [cover], loops_per_stage=4)
    cuts = cert.cuts[0]
    for a, b, c in zip(cuts, cuts[1:], cuts[2:]):
        w = is_compliant_loop(cert.sequence[a + 1:c + 1], cover, cert.base, s)
        assert w.verified


def test_perturbation_examples():
    s = make_zoo_system("tent", resolution="1/16")
    cover = grid_cover(s.sample, F(1, 4))
    cert = bowen_sharkovsky(s, 0, [cover])
    good = certificate_witnesses(cert, s)[0]
    assert good.verified
    rep = perturb_invariance_check(good, s, trials=100, seed=1)
    assert rep.unchanged == 100 and rep.ok
    broken = is_compliant_loop(list(good.points[-2:]), cover, cert.base, s)
    assert "3" in broken.failed
    rep = perturb_invariance_check(broken, s, trials=50, seed=2)
    assert rep.unchanged == 50
    control = perturb_invariance_check(good, s, trials=100, seed=3, touch_support=True)
    assert control.control and control.flips


def test_generic_builder_single_target_matches_one_stage():
    s = make_zoo_system("identity", resolution="1/8")
    cover = grid_cover(s.sample, F(1, 4))
    a = generic_builder(s, 0, [cover])
    b = bowen_sharkovsky(s, 0, [cover])
    assert a.sequence == b.sequence and a.cuts == b.cuts


def non_nested_targets(s):
    return [grid_cover(s.sample, F(1, 4)), grid_cover(s.sample, F(1, 5)),
            grid_cover(s.sample, F(1, 6), offset=F(3, 40)),
            grid_cover(s.sample, F(1, 7), offset=F(3, 40))]


def test_generic_builder_meets_every_target():
    s = make_zoo_system("identity", resolution="1/64")
    targets = non_nested_targets(s)
    for i, u in enumerate(targets):
        for j, v in enumerate(targets):
            if i != j:
                assert not refines(u, v)
    cert = generic_builder(s, 0, targets)
    assert verify_certificate(cert, s).ok
    for u in targets:
        assert decompose(cert.sequence, u, cert.base, s) is not None


def test_generic_builder_repeated_target_still_grows():
    s = make_zoo_system("identity", resolution="1/8")
    cover = grid_cover(s.sample, F(1, 4))
    one = generic_builder(s, 0, [cover])
    two = generic_builder(s, 0, [cover, cover])
    assert len(two.sequence) > len(one.sequence)
    assert verify_certificate(two, s).ok


def test_certificate_round_trip():
    s = make_zoo_system("rotation", {"angle": "1/3"}, "1/24")
    ladder = [grid_cover(s.sample, h) for h in (F(1, 2), F(1, 4))]
    cert = bowen_sharkovsky(s, 3, ladder)
    text = cert.dumps()
    again = ComplianceCertificate.loads(text)
    assert again.dumps() == text
    assert again.sequence == cert.sequence and again.ladder == cert.ladder
    assert verify_certificate(again, s).ok
    with pytest.raises(BadParams):
        ComplianceCertificate.loads("{")
    with pytest.raises(BadParams):
        ComplianceCertificate.loads('{"base": {}}')


def test_structure_violations(tri):
    s, cover = tri
    cert = bowen_sharkovsky(s, 0, [cover])
    bad = ComplianceCertificate(cert.sequence, cert.base, cert.ladder, (0,), ((0, 2, 4),))
    assert any(v["kind"] == "structure" for v in verify_certificate(bad, s).violations)


def test_refinement_transfer_on_builder_ladders():
    for kind, params in [("tent", {}), ("rotation", {"angle": "1/3"}), ("identity", {})]:
        s = make_zoo_system(kind, params, "1/32")
        ladder = [grid_cover(s.sample, F(1, 2**k)) for k in range(1, 5)]
        cert = bowen_sharkovsky(s, 0, ladder)
        for j in range(1, len(ladder)):
            assert is_full_refinement(ladder[j], ladder[j - 1])
        rep = verify_certificate(cert, s)
        assert rep.ok and rep.checks["transfer_checks"] > 0


def test_sequence_csv():
    seq = [Point.of({0: F(1, 2)}), Point.of({1: F(1, 3)})]
    assert sequence_csv(seq) == "index,x0,x1\n0,1/2,0/1\n1,0/1,1/3\n"
