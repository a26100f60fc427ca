import re

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from randlyap.errors import CaseUnrealizable, ConeNotMapped, H3Failed, InvalidC, NotInGN, PreconditionError
from randlyap.random_chain import NoiseModel
from randlyap.scalar_maps import circle_distance, find_critical_sets, sine_map
from randlyap.symbolic import (B, FAIL_TAGS, G, I, LETTERS, Cone, RegionParams, SymbolWord, allowed_words,
                               chain_cones, check_grammar_soundness, check_bad_then_good, classify,
                               classify_distance, cone_map, cone_step, extract_word, gn_complement_scaling,
                               gn_membership, grammar_violations, in_G_N, first_version_block_batch, maps_into,
                               min_growth, property_B_batch, sample_gn_blocks, sample_word_positions,
                               shifted_positions, validate_grammar, verify_allowed_words,
                               verify_property_B, verify_word_lemmas, word_matrices)
from randlyap.torus_dynamics import mod1


@pytest.fixture(scope="module")
def sine_crit():
    return find_critical_sets(sine_map(1.0))


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

def test_classify_examples(sine_crit):
    f, p = sine_map(100.0), RegionParams(c=0.05, p=0.125, beta=0.5)
    assert classify(f, sine_crit, p, 0.25) == "B"
    assert classify(f, sine_crit, p, 0.26) == "B"
    assert classify(f, sine_crit, p, 0.28) == "I"
    assert classify(f, sine_crit, p, 0.5) == "G"
    assert classify(f, sine_crit, p, 0.75) == "B"


def test_boundaries_belong_to_the_outer_region():
    p, L = RegionParams(c=0.05, p=0.125, beta=0.5), 100.0
    assert classify_distance(0.05, p, L) == G
    assert classify_distance(np.sqrt(0.05 / 100.0), p, L) == I
    assert classify_distance(np.nextafter(0.05, 0), p, L) == I


def test_invalid_c(sine_crit):
    with pytest.raises(InvalidC):
        classify(sine_map(10.0), sine_crit, RegionParams(c=0.05, p=0.125, beta=0.5), 0.3)
    with pytest.raises(InvalidC):
        classify(sine_map(100.0), sine_crit, RegionParams(c=0.3, p=0.125, beta=0.5), 0.3)
    with pytest.raises(InvalidC):
        RegionParams(c=0.0, p=0.125, beta=0.5)
    with pytest.raises(InvalidC):
        RegionParams(c=0.01, p=0.125, beta=0.5).validate(sine_crit, 1e4, margin=True)


@settings(max_examples=300, deadline=None)
@given(d=st.floats(0, 0.5), c=st.floats(1e-3, 0.2), L=st.floats(10, 1e6))
def test_classification_partitions_the_circle(d, c, L):
    p = RegionParams(c=c, p=0.125, beta=0.5)
    code = int(classify_distance(d, p, L))
    in_b, in_i = d < np.sqrt(c / L), np.sqrt(c / L) <= d < c
    assert code == (B if in_b else I if in_i else G)


# ---------------------------------------------------------------------------
# words
# ---------------------------------------------------------------------------

def test_word_endianness():
    w = SymbolWord.from_time_order("BIG")
    assert w.letters == "GIB"
    assert w.letter(0) == "B" and w.letter(2) == "G"
    assert w.time_order == "BIG" and len(w) == 3 and str(w) == "GIB"
    with pytest.raises(ValueError):
        SymbolWord("GXB")
    with pytest.raises(ValueError):
        SymbolWord("GIB", decomposition=("G", "B"))


def test_extract_word_matches_independent_classification():
    f = sine_map(1000.0, 0.25)
    crit = find_critical_sets(f)
    p = RegionParams(c=0.003, p=0.125, beta=0.5)
    rng = np.random.default_rng(0)
    for _ in range(200):
        x, y = rng.random(2)
        w = rng.uniform(-1e-4, 1e-4, 8)
        word = extract_word(f, crit, p, w, (x, y))
        letters = []
        for wi in w:
            xs = mod1(x + wi)
            letters.append(classify(f, crit, p, xs))
            x, y = mod1(f(xs) - y), xs
        assert word.time_order == "".join(letters)


def test_extract_word_constructed_orbits():
    f = sine_map(1000.0, 0.25)
    crit = find_critical_sets(f)
    p = RegionParams(c=0.003, p=0.125, beta=0.5)
    assert extract_word(f, crit, p, [0.0], (0.5, 0.3)).letters == "G"
    # pick y0 so that the second shifted point sits at 0.25 + 0.7 c, inside I
    target = 0.25 + 0.7 * 0.003
    y0 = mod1(f(0.5) - target)
    word = extract_word(f, crit, p, [0.0, 0.0, 0.0], (0.5, y0))
    assert word.time_order[:2] == "GI"
    assert word.letter(0) == "G" and word.letter(1) == "I"


def test_shifted_positions_batch_matches_single():
    f = sine_map(50.0, 0.1)
    rng = np.random.default_rng(1)
    W = rng.uniform(-0.01, 0.01, (20, 5))
    x0, y0 = rng.random(20), rng.random(20)
    batch = shifted_positions(f, W, x0, y0)
    for k in range(20):
        assert np.array_equal(batch[k], shifted_positions(f, W[k], x0[k], y0[k]))


# ---------------------------------------------------------------------------
# grammar
# ---------------------------------------------------------------------------

def test_grammar_examples():
    rep = validate_grammar(SymbolWord("GBIBG"))
    assert rep.valid and rep.decomposition == ("G", "BIB", "G")
    bad = validate_grammar(SymbolWord("GIBIG"))
    assert not bad.valid and bad.violation_index == 2
    assert not validate_grammar(SymbolWord("GGB")).valid
    assert validate_grammar(SymbolWord("GGB")).violation_index == 0
    assert not validate_grammar(SymbolWord("BGG")).valid
    assert validate_grammar(SymbolWord("GGGG")).decomposition == ("GGGG",)


def _oracle_allowed(run):
    # the excursion list written out: B, BB, B I^k B, I^k B, I^k, B I^k
    k = run.count("I")
    if k == 0:
        return run in ("B", "BB")
    ik = "I" * k
    return run in (ik, "B" + ik, ik + "B", "B" + ik + "B")


words = st.text(alphabet="GIB", min_size=1, max_size=14)


@settings(max_examples=500, deadline=None)
@given(s=words)
def test_grammar_matches_excursion_oracle(s):
    w = SymbolWord(s)
    runs = [r for r in re.split("G+", s) if r]
    expect = s[0] == "G" and s[-1] == "G" and all(_oracle_allowed(r) for r in runs)
    rep = validate_grammar(w)
    assert rep.valid == expect
    if rep.valid:
        assert "".join(rep.decomposition) == s
    else:
        assert 0 <= rep.violation_index < len(s)


@settings(max_examples=500, deadline=None)
@given(s=words)
def test_vectorised_grammar_agrees(s):
    codes = np.array([[LETTERS.index(ch) for ch in SymbolWord(s).time_order]])
    assert bool(grammar_violations(codes)[0]) == (not validate_grammar(SymbolWord(s)).valid)


def test_allowed_words_are_valid_excursions():
    for run in allowed_words(4):
        assert validate_grammar(SymbolWord("G" + run[::-1] + "G")).valid


# ---------------------------------------------------------------------------
# G_N
# ---------------------------------------------------------------------------

def test_gn_far_orbit_is_member_of_both_versions(sine_crit):
    f = sine_map(100.0)
    xt = np.full((1, 7), 0.5)
    for version in ("thm1", "thm2"):
        p = RegionParams(c=0.003, p=0.125, beta=0.5, version=version)
        member, fail = gn_membership(f, sine_crit, p, xt, 6)
        assert member[0] and FAIL_TAGS[fail[0]] == ""


def test_gn_failure_tags(sine_crit):
    f, L = sine_map(100.0), 100.0
    p = RegionParams(c=0.003, p=0.125, beta=0.5)
    at_crit = in_G_N(f, sine_crit, p, [0.0] * 7, (0.25, 0.3), 6)
    assert not at_crit.member and at_crit.failed_condition == "(a)(i)"
    assert in_G_N(f, sine_crit, RegionParams(0.003, 0.125, 0.5, "thm1"), [0.0] * 6, (0.25, 0.3),
                  6).failed_condition == "(a)"
    # two neighbours each just above the (a)(i) floor break the product condition
    d = 2 * L ** (-2 + 0.5)
    xt = np.array([[0.5, 0.25 + d, 0.25 + d, 0.5, 0.5, 0.5, 0.5]])
    assert FAIL_TAGS[gn_membership(f, sine_crit, p, xt, 6)[1][0]] == "(a)(ii)"
    # d = 0.002 is above the (a) floors but below the margin p / (16 M1) = 0.0039
    xt = np.array([[0.252, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]])
    assert FAIL_TAGS[gn_membership(f, sine_crit, p, xt, 6)[1][0]] == "(b)"
    with pytest.raises(ValueError):
        in_G_N(f, sine_crit, p, [0.0] * 6, (0.5, 0.3), 6)


def test_sampled_blocks_are_members(sine_crit):
    f = sine_map(100.0, 0.25)
    crit = find_critical_sets(f)
    p = RegionParams(c=0.003, p=0.125, beta=0.5)
    x0, y0, w, acc = sample_gn_blocks(f, crit, p, NoiseModel(1e-3, seed=2), 50, 6)
    assert 0 < acc < 1 and x0.size == 50
    for k in range(50):
        assert in_G_N(f, crit, p, w[k], (x0[k], y0[k]), 6).member


def test_gn_complement_grows_linearly_in_N():
    f = sine_map(100.0, 0.25)
    crit = find_critical_sets(f)
    p = RegionParams(c=0.003, p=0.125, beta=0.5)
    fit = gn_complement_scaling(f, crit, p, NoiseModel(0.01, seed=3), n_samples=2 * 10**5)
    assert np.all(np.diff(fit.fractions) > 0)
    assert fit.slope > 0 and fit.r_squared > 0.95


# ---------------------------------------------------------------------------
# lemma gates and Monte Carlo checks
# ---------------------------------------------------------------------------

def test_lemma_gate_on_h3():
    # integer L with zero offset sends a critical point onto a critical point
    f = sine_map(1000.0)
    p = RegionParams(c=0.003, p=0.125, beta=0.5, c0=0.2)
    with pytest.raises(H3Failed):
        check_bad_then_good(f, find_critical_sets(f), p, 10, 1e-4)
    g = sine_map(1000.25)
    assert check_bad_then_good(g, find_critical_sets(g), p, 10**4, 1e-4).violations == 0


def test_lemma_gate_on_noise_size():
    f = sine_map(1000.0, 0.25)
    p = RegionParams(c=0.003, p=0.125, beta=0.5, c0=0.2)
    with pytest.raises(PreconditionError):
        check_bad_then_good(f, find_critical_sets(f), p, 10, 2 / 1000.0)
    with pytest.raises(PreconditionError):
        check_bad_then_good(f, find_critical_sets(f), RegionParams(0.003, 0.125, 0.5), 10, 1e-4)


def test_bad_to_good_lemma_small_run():
    f = sine_map(1000.0, 0.25)
    p = RegionParams(c=0.003, p=0.125, beta=0.5, c0=0.2)
    rep = check_bad_then_good(f, find_critical_sets(f), p, 10**5, 1e-4, NoiseModel(1e-4, seed=4))
    assert rep.violations == 0 and rep.tested == 10**5
    assert rep.detail["min_distance_third_point"] >= 0.003


def test_grammar_soundness_small_run():
    f = sine_map(1000.0, 0.25)
    p = RegionParams(c=0.003, p=0.125, beta=0.5, c0=0.2)
    rep = check_grammar_soundness(f, find_critical_sets(f), p, NoiseModel(1e-4, seed=5), 5 * 10**4, 16)
    assert rep.violations == 0 and rep.tested == 5 * 10**4
    assert rep.detail["with_excursion"] > 0


# ---------------------------------------------------------------------------
# cones
# ---------------------------------------------------------------------------

def test_cone_examples():
    out, growth = cone_step(10.0, Cone(0.2))
    assert out.s == pytest.approx(5 / 49)
    assert Cone(0.2).contains(out)
    assert growth == pytest.approx(np.sqrt((9.8) ** 2 + 1) / np.sqrt(1.04))
    with pytest.raises(ConeNotMapped):
        cone_step(0.0, Cone(0.01))
    with pytest.raises(ConeNotMapped):
        cone_step(10.0, Cone(0.2), target=Cone(0.05))
    f = sine_map(10.0)
    assert cone_map(f, 0.0, Cone(0.2)).s == pytest.approx(1 / (20 * np.pi - 0.2))


def test_canonical_cones_are_nested():
    n, u, w = Cone.narrow(1e4, 0.5), Cone.unit(), Cone.wide(1e4, 0.5)
    assert n.s < u.s == 1.0 < w.s
    with pytest.raises(ValueError):
        Cone(0.0)


def test_good_step_maps_wide_cone_into_narrow_cone():
    # on G, |f'| >= 2 pi L sin(2 pi c); at L = 1e8 this beats the wide cone by L^(beta/4)
    L, beta, c = 1e8, 0.5, 0.01
    f = sine_map(L)
    crit = find_critical_sets(f)
    x = np.random.default_rng(6).random(10**5)
    x = x[crit.dist_cprime(x) >= c]
    M = word_matrices(f.d1(x)[:, None])
    assert np.all(maps_into(M, Cone.wide(L, beta).s, Cone.narrow(L, beta).s))
    assert np.all(min_growth(M, Cone.wide(L, beta).s) >= 0.25 * L ** (beta / 4))


def test_maps_into_and_min_growth_against_dense_rays():
    rng = np.random.default_rng(7)
    M = rng.normal(size=(200, 2, 2)) * 10
    s_in = 0.3
    ks = np.linspace(-s_in, s_in, 20001)
    u = np.stack([np.ones_like(ks), ks]) / np.sqrt(1 + ks ** 2)
    img = np.einsum("nij,jk->nik", M, u)
    dense_growth = np.linalg.norm(img, axis=1).min(axis=1)
    assert np.allclose(min_growth(M, s_in), dense_growth, rtol=1e-6)
    slopes = np.abs(img[:, 1] / img[:, 0])
    pole = np.any(np.diff(np.sign(img[:, 0]), axis=1) != 0, axis=1)
    for s_out in (0.5, 2.0):
        dense = ~pole & np.all(slopes <= s_out, axis=1)
        assert np.array_equal(maps_into(M, s_in, s_out), dense)


def test_chained_cones_are_conservative():
    L, beta = 1e4, 0.5
    f = sine_map(L)
    crit = find_critical_sets(f)
    p = RegionParams(c=0.01, p=0.125, beta=beta)
    rng = np.random.default_rng(8)
    s_in = Cone.narrow(L, beta).s
    for word in ("BB", "BIB", "IB", "IIB"):
        D = f.d1(sample_word_positions(crit, p, L, word, 500, rng))
        M = word_matrices(D)
        exact = min_growth(M, s_in)
        for k in range(D.shape[0]):
            try:
                out, g = chain_cones(D[k], Cone(s_in))
            except ConeNotMapped:
                continue
            assert maps_into(M[k], s_in, out.s * (1 + 1e-9))[0]
            assert g <= exact[k] * (1 + 1e-9)


@settings(max_examples=300, deadline=None)
@given(d1=st.floats(2, 1e4), d2=st.floats(2, 1e4), s=st.floats(1e-4, 1.5),
       sg1=st.sampled_from([-1, 1]), sg2=st.sampled_from([-1, 1]))
def test_growth_is_supermultiplicative_over_pieces(d1, d2, s, sg1, sg2):
    d1, d2 = sg1 * d1, sg2 * d2
    if abs(d1) <= s:
        return
    mid, _ = cone_step(d1, Cone(s))
    M1 = word_matrices(np.array([[d1]]))
    M2 = word_matrices(np.array([[d2]]))
    M = word_matrices(np.array([[d1, d2]]))
    whole = min_growth(M, s)[0]
    assert whole >= min_growth(M1, s)[0] * min_growth(M2, mid.s)[0] * (1 - 1e-9)


@pytest.fixture(scope="module")
def word_setup():
    L = 1e4
    f = sine_map(L)
    return f, find_critical_sets(f), RegionParams(c=0.01, p=0.125, beta=0.5)


@pytest.mark.parametrize("case", list("abcdef"))
def test_word_cases_have_no_violations(word_setup, case):
    f, crit, p = word_setup
    rep = verify_word_lemmas(f, crit, p, case, 10**4, np.random.default_rng(9))
    assert rep.samples == 10**4
    assert rep.containment_violations == 0
    assert rep.growth_violations == 0
    assert rep.adjoint_violations == 0
    assert rep.min_growth_observed >= rep.growth_bound


def test_case_a_bound_dwarfs_quarter_power(word_setup):
    f, crit, p = word_setup
    rep = verify_word_lemmas(f, crit, p, "a", 10**3)
    assert rep.growth_bound == pytest.approx(0.5 * np.sqrt(0.01 * 1e4) / crit.k1)
    assert rep.min_growth_observed > 1e4 ** 0.25


def test_bib_exercises_both_subcases(word_setup):
    f, crit, p = word_setup
    rep = verify_word_lemmas(f, crit, p, "f", 10**4)
    assert rep.subcase_counts["I"] > 0 and rep.subcase_counts["II"] > 0
    assert sum(rep.subcase_counts.values()) == rep.samples


def test_allowed_words_grow_with_the_i_count(word_setup):
    f, crit, p = word_setup
    for rep in verify_allowed_words(f, crit, p, 2000, max_k=3):
        assert rep.containment_violations == rep.growth_violations == rep.adjoint_violations == 0


def test_unknown_case_and_unrealisable_words(word_setup):
    f, crit, p = word_setup
    with pytest.raises(ValueError):
        verify_word_lemmas(f, crit, p, "g", 10)
    # B letters need d < sqrt(c/L) but consecutive products >= K1^2 L^(-2 + beta/2)
    tight = RegionParams(c=0.05, p=0.125, beta=0.9)
    with pytest.raises(CaseUnrealizable):
        sample_word_positions(crit, tight, 100.0, "BB", 10, np.random.default_rng(0), max_rounds=5)


def test_sampled_word_positions_realise_the_word(word_setup):
    f, crit, p = word_setup
    pos = sample_word_positions(crit, p, f.L, "BIIB", 1000, np.random.default_rng(10))
    codes = classify_distance(circle_distance(pos, np.asarray(crit.cprime)), p, f.L)
    assert np.all(codes == np.array([B, I, I, B]))


# ---------------------------------------------------------------------------
# block hyperbolicity
# ---------------------------------------------------------------------------

def test_property_B_rejects_points_outside_G_N():
    f = sine_map(100.0, 0.25)
    crit = find_critical_sets(f)
    p = RegionParams(c=0.003, p=0.125, beta=0.5)
    with pytest.raises(NotInGN):
        verify_property_B(f, crit, p, [0.0] * 7, (crit.cprime[0], 0.3), 6)


def test_property_B_on_sampled_blocks():
    f = sine_map(100.0, 0.25)
    crit = find_critical_sets(f)
    p = RegionParams(c=0.003, p=0.125, beta=0.5)
    rep = property_B_batch(f, crit, p, NoiseModel(1e-3, seed=11), 2000, 6)
    assert rep.sigma_violations == 0 and rep.angle_violations == 0
    assert rep.growth_exponent_min >= 0.5 / 15
    x0, y0, w, _ = sample_gn_blocks(f, crit, p, NoiseModel(1e-3, seed=11), 20, 6)
    for k in range(20):
        single = verify_property_B(f, crit, p, w[k], (x0[k], y0[k]), 6)
        assert single.sigma1_ok and single.angle_ok


def test_first_version_block_bounds():
    f = sine_map(100.0, 0.25)
    crit = find_critical_sets(f)
    rep = first_version_block_batch(f, crit, 0.5, NoiseModel(1e-3, seed=12), 2000, 6)
    assert rep.sigma_violations == 0 and rep.angle_violations == 0
