import numpy as np
import pytest

from convlimit.errors import BadRange, InvalidSpec, NoConvergenceAtDepth
from convlimit.groups import cyclic_group, subgroup, symmetric_group
from convlimit.limits import (
    ConjugacyCheck,
    LimitResult,
    NoiseLaw,
    classify_trichotomy,
    compute_limit,
    constant_noise,
    extend_centerings,
    noise_from_spec,
    partial_product,
    shape_distance,
    strong_subgroup,
    verify_conjugacy_uniqueness,
)
from convlimit.measures import (
    Measure,
    convolve,
    delta,
    haar,
    right_stabilizer,
    translate_right,
    tv_distance,
)

Z4 = cyclic_group(4)
S3 = symmetric_group(3)


def z4_noise_case_a():
    return constant_noise(haar(Z4))


def z4_noise_case_b():
    return constant_noise(delta(Z4, 1))


def z4_noise_case_c():
    return constant_noise(Measure(Z4, [0.5, 0.0, 0.5, 0.0]))


def s3_noise_case_c():
    lab = {name: i for i, name in enumerate(S3.element_labels)}
    w = np.zeros(6)
    w[0] = 0.5
    w[lab["(12)"]] = 0.5
    return constant_noise(Measure(S3, w))


CORPUS = [z4_noise_case_a, z4_noise_case_b, z4_noise_case_c, s3_noise_case_c]


class TestNoiseLaw:
    def test_index_mapping(self):
        p0, p1 = delta(Z4, 0), delta(Z4, 1)
        t0, t1, t2 = delta(Z4, 2), delta(Z4, 3), haar(Z4)
        noise = NoiseLaw(Z4, prefix=(p0, p1), tail=(t0, t1, t2), tail_kind="periodic")
        assert noise.measure_at(0) is p0
        assert noise.measure_at(-1) is p1
        # tail position k maps to tail[(-k - m) % period] with m = 2
        assert noise.measure_at(-2) is t0
        assert noise.measure_at(-3) is t1
        assert noise.measure_at(-4) is t2
        assert noise.measure_at(-5) is t0

    def test_positive_index_rejected(self):
        with pytest.raises(BadRange):
            z4_noise_case_a().measure_at(1)

    def test_empty_tail_rejected(self):
        with pytest.raises(InvalidSpec):
            NoiseLaw(Z4, prefix=(), tail=(), tail_kind="constant")

    def test_wrong_group_rejected(self):
        with pytest.raises(InvalidSpec):
            NoiseLaw(Z4, prefix=(), tail=(haar(S3),), tail_kind="constant")

    def test_from_spec(self):
        noise = noise_from_spec(
            {
                "group": {"kind": "builtin", "name": "Z4"},
                "prefix": [{"kind": "delta", "at": 2}],
                "tail": {"kind": "constant", "mu": {"kind": "delta", "at": 1}},
            }
        )
        assert noise.group.order == 4
        assert np.array_equal(noise.measure_at(0).weights, [0, 0, 1, 0])
        assert np.array_equal(noise.measure_at(-5).weights, [0, 1, 0, 0])

    def test_from_spec_periodic(self):
        noise = noise_from_spec(
            {
                "group": {"kind": "builtin", "name": "Z4"},
                "tail": {
                    "kind": "periodic",
                    "mus": [{"kind": "delta", "at": 1}, {"kind": "delta", "at": 2}],
                },
            }
        )
        assert noise.tail_kind == "periodic"
        assert np.array_equal(noise.measure_at(-1).weights, [0, 0, 1, 0])

    def test_bad_specs(self):
        with pytest.raises(InvalidSpec):
            noise_from_spec({"group": {"kind": "builtin", "name": "Z4"}})
        with pytest.raises(InvalidSpec):
            noise_from_spec(
                {"group": {"kind": "builtin", "name": "Z4"}, "tail": {"kind": "weird"}}
            )


class TestPartialProduct:
    def test_single_factor(self):
        noise = z4_noise_case_c()
        got = partial_product(noise, -3, -3)
        assert np.array_equal(got.weights, noise.measure_at(-3).weights)

    def test_point_mass_chain(self):
        # four delta_1 factors on Z4 compose to delta_0
        got = partial_product(z4_noise_case_b(), 0, -3)
        assert np.array_equal(got.weights, [1, 0, 0, 0])

    def test_haar_absorbing(self):
        got = partial_product(z4_noise_case_a(), 0, -7)
        assert tv_distance(got, haar(Z4)) < 1e-12

    def test_bad_range(self):
        noise = z4_noise_case_a()
        with pytest.raises(BadRange):
            partial_product(noise, -3, 0)
        with pytest.raises(BadRange):
            partial_product(noise, 1, 0)

    def test_splitting_identity(self):
        rng = np.random.default_rng(0)
        w1 = rng.random(4) + 0.01
        w2 = rng.random(4) + 0.01
        noise = NoiseLaw(
            Z4,
            prefix=(Measure(Z4, w1 / w1.sum()),),
            tail=(Measure(Z4, w2 / w2.sum()),),
            tail_kind="constant",
        )
        for k, j, l in [(0, -2, -5), (0, -1, -3), (-1, -2, -6)]:
            whole = partial_product(noise, k, l)
            split = convolve(partial_product(noise, k, j + 1), partial_product(noise, j, l))
            assert tv_distance(whole, split) < 1e-12


class TestShapeDistance:
    def test_translate_of_self(self):
        mu = Measure(Z4, [0.25, 0.5, 0.25, 0.0])
        d, g = shape_distance(mu, translate_right(mu, 3))
        assert d == pytest.approx(0.0, abs=1e-15)
        assert g == 3

    def test_point_masses(self):
        d, g = shape_distance(delta(Z4, 1), delta(Z4, 3))
        assert d == 0.0
        assert g == 2  # a^{-1} b = -1 + 3

    def test_half_supports(self):
        d, g = shape_distance(Measure(Z4, [0.5, 0.5, 0, 0]), Measure(Z4, [0, 0, 0.5, 0.5]))
        assert d == 0.0
        assert g == 2

    def test_smallest_witness_under_stabilizer(self):
        # omega_H is fixed by both 0 and 2; the witness must be the smaller
        mu = Measure(Z4, [0.5, 0.0, 0.5, 0.0])
        d, g = shape_distance(mu, mu)
        assert d == 0.0 and g == 0


class TestComputeLimit:
    def test_case_a_haar_tail(self):
        res = compute_limit(z4_noise_case_a())
        assert res.case == "A"
        assert res.subgroup.members == (0, 1, 2, 3)
        for k, lam in res.lambdas.items():
            assert tv_distance(lam, haar(Z4)) < 1e-12
        assert res.residuals["conv_eq"] <= 1e-9
        assert res.residuals["haar_check"] <= 1e-9
        assert res.residuals["shape_stabilization"] <= 1e-9

    def test_case_b_point_mass_chain(self):
        res = compute_limit(z4_noise_case_b())
        assert res.case == "B"
        assert res.subgroup.members == (0,)
        # exact point-mass algebra: the gauge puts lambda_0 at the identity
        # and the convolution equation forces lambda_k = delta_{k mod 4}
        for k in range(res.k_min, 1):
            expected = delta(Z4, k % 4)
            assert tv_distance(res.lambdas[k], expected) < 1e-12
        assert res.residuals["conv_eq"] <= 1e-9
        assert res.residuals["haar_check"] <= 1e-9

    def test_case_c_idempotent_tail(self):
        res = compute_limit(z4_noise_case_c())
        assert res.case == "C"
        assert res.subgroup.members == (0, 2)
        for lam in res.lambdas.values():
            assert tv_distance(lam, Measure(Z4, [0.5, 0, 0.5, 0])) < 1e-12
        assert res.residuals["conv_eq"] <= 1e-9
        assert res.residuals["haar_check"] <= 1e-9

    def test_s3_idempotent_tail(self):
        res = compute_limit(s3_noise_case_c())
        assert res.case == "C"
        lab = {name: i for i, name in enumerate(S3.element_labels)}
        assert res.subgroup.members == (0, lab["(12)"])

    def test_prefix_shifts_window_laws(self):
        noise = NoiseLaw(
            Z4, prefix=(delta(Z4, 2),), tail=(delta(Z4, 1),), tail_kind="constant"
        )
        res = compute_limit(noise)
        assert res.case == "B"
        assert tv_distance(res.lambdas[0], delta(Z4, 0)) < 1e-12
        assert tv_distance(res.lambdas[-1], delta(Z4, 2)) < 1e-12

    def test_periodic_point_mass_tail(self):
        noise = NoiseLaw(
            Z4,
            prefix=(),
            tail=(delta(Z4, 1), delta(Z4, 2)),
            tail_kind="periodic",
        )
        res = compute_limit(noise)
        assert res.case == "B"
        assert res.residuals["conv_eq"] <= 1e-12

    def test_slow_geometric_convergence(self):
        noise = constant_noise(Measure(Z4, [0.7, 0.3, 0.0, 0.0]))
        res = compute_limit(noise)
        assert res.case == "A"
        assert tv_distance(res.lambda0, haar(Z4)) < 1e-8
        assert res.depth_used > 25

    def test_no_convergence_at_tiny_depth(self):
        with pytest.raises(NoConvergenceAtDepth) as exc:
            compute_limit(z4_noise_case_a(), max_depth=10)
        assert exc.value.max_depth == 10
        assert len(exc.value.history) == 10

    def test_h_stabilizes_every_window_law(self):
        for make in CORPUS:
            res = compute_limit(make())
            for lam in res.lambdas.values():
                stab = right_stabilizer(lam, 1e-6)
                assert set(res.subgroup.members) <= set(stab.members)
                assert stab.members == res.subgroup.members

    def test_convolution_equation_across_window(self):
        for make in CORPUS:
            noise = make()
            res = compute_limit(noise)
            for k in range(res.k_min + 1, 1):
                resid = tv_distance(
                    res.lambdas[k], convolve(noise.measure_at(k), res.lambdas[k - 1])
                )
                assert resid <= 1e-8

    def test_alphas_align_deep_products(self):
        for make in CORPUS:
            noise = make()
            res = compute_limit(noise)
            for l in (-res.depth_used, -res.depth_used + 1):
                prod = partial_product(noise, 0, l)
                aligned = translate_right(prod, res.alphas[l])
                assert tv_distance(aligned, res.lambda0) <= 10 * 1e-9

    def test_one_step_fixed_point_for_idempotent_tail(self):
        from convlimit.measures import is_haar_idempotent

        noise = z4_noise_case_c()
        h_tail = is_haar_idempotent(noise.tail[0])
        res = compute_limit(noise)
        assert h_tail is not None
        assert set(h_tail.members) <= set(res.subgroup.members)
        assert res.subgroup.members == h_tail.members

    def test_determinism(self):
        a = compute_limit(z4_noise_case_c())
        b = compute_limit(z4_noise_case_c())
        assert a.alphas == b.alphas
        for k in a.lambdas:
            assert np.array_equal(a.lambdas[k].weights, b.lambdas[k].weights)


class TestClassifyAndStrongSubgroup:
    def test_classify_matches_case(self):
        for make, case in zip(CORPUS, ["A", "B", "C", "C"]):
            res = compute_limit(make())
            assert classify_trichotomy(res) == res.case == case

    def test_strong_subgroup_abelian(self):
        res = compute_limit(z4_noise_case_c())
        assert strong_subgroup(Z4, res.subgroup) == res.subgroup

    def test_strong_subgroup_s3(self):
        res = compute_limit(s3_noise_case_c())
        assert strong_subgroup(S3, res.subgroup).order == 6

    def test_strong_subgroup_trivial(self):
        res = compute_limit(z4_noise_case_b())
        assert strong_subgroup(Z4, res.subgroup).order == 1


class TestConjugacyUniqueness:
    @pytest.mark.parametrize("make", CORPUS)
    def test_corpus(self, make):
        noise = make()
        check = verify_conjugacy_uniqueness(noise)
        assert check.ok
        # witness validity by the exact identities
        res1 = compute_limit(noise)
        res2 = compute_limit(noise, gauge="min-support", confirm_span=40)
        moved = translate_right(res1.lambda0, check.witness)
        assert tv_distance(moved, res2.lambda0) <= 10 * 1e-9
        from convlimit.groups import conjugate_subgroup

        assert conjugate_subgroup(res1.subgroup, check.witness) == res2.subgroup


def _fuzz_corpus():
    """A wider corpus: random full-support tails, idempotent subgroup tails,
    coset-supported tails with deterministic quotient motion, prefixes and
    periodic tails, across abelian and non-abelian groups."""
    from convlimit.groups import (
        cyclic_group,
        dihedral_group_4,
        enumerate_subgroups,
        quaternion_group,
    )
    from convlimit.measures import haar_subgroup

    rng = np.random.default_rng(2024)
    groups = [cyclic_group(6), S3, dihedral_group_4(), quaternion_group()]
    corpus = []
    for g in groups:
        w = rng.random(g.order) + 0.05
        full = Measure(g, w / w.sum())
        corpus.append(constant_noise(full))
        for h in enumerate_subgroups(g):
            corpus.append(constant_noise(haar_subgroup(g, h)))
        corpus.append(
            NoiseLaw(g, prefix=(delta(g, 1), full), tail=(full,), tail_kind="constant")
        )
        w2 = rng.random(g.order) + 0.05
        corpus.append(
            NoiseLaw(
                g,
                prefix=(),
                tail=(full, Measure(g, w2 / w2.sum())),
                tail_kind="periodic",
            )
        )
    # coset-supported tail: uniform on the reflections, the nontrivial coset
    # of the rotation subgroup (indices 0..3) in D4
    d4 = groups[2]
    refl = [g for g in range(8) if g >= 4]
    wr = np.zeros(8)
    wr[refl] = 0.25
    corpus.append(constant_noise(Measure(d4, wr)))
    return corpus


class TestFuzzCorpus:
    @pytest.mark.parametrize("idx", range(len(_fuzz_corpus())))
    def test_invariant_battery(self, idx):
        noise = _fuzz_corpus()[idx]
        res = compute_limit(noise)
        # the case label matches the subgroup extremes exactly
        assert (res.case == "A") == (res.subgroup.order == noise.group.order)
        assert (res.case == "B") == (res.subgroup.order == 1)
        # H stabilizes every reported law
        for lam in res.lambdas.values():
            assert right_stabilizer(lam, 1e-6).members == res.subgroup.members
        # the convolution equation holds across the window
        assert res.residuals["conv_eq"] <= 1e-8
        assert res.residuals["haar_check"] <= 1e-6
        # the two-gauge run agrees up to conjugacy
        check = verify_conjugacy_uniqueness(noise)
        assert check.ok, (idx, check)


class TestExtendCenterings:
    def test_agrees_with_result_alphas(self):
        noise = z4_noise_case_c()
        res = compute_limit(noise)
        ext = extend_centerings(noise, res, res.deepest_depth + 40)
        for l, a in res.alphas.items():
            if l == -res.deepest_depth:
                continue  # anchor alpha is pinned by the gauge, not realigned
            assert ext[l] == a
        assert set(ext) == {-i for i in range(res.deepest_depth + 41)}

    def test_shallow_request_subsets(self):
        noise = z4_noise_case_c()
        res = compute_limit(noise)
        ext = extend_centerings(noise, res, 5)
        assert set(ext) == {0, -1, -2, -3, -4, -5}
