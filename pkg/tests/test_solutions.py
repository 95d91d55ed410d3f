import numpy as np
import pytest

from convlimit.errors import CosetNotStabilized, GridMismatch, InvalidSpec
from convlimit.groups import (
    cyclic_group,
    default_section,
    left_cosets,
    section_from_representatives,
    subgroup,
    symmetric_group,
)
from convlimit.limits import compute_limit, constant_noise
from convlimit.measures import (
    Measure,
    delta,
    haar,
    haar_subgroup,
    translate_right,
    tv_distance,
)
from convlimit.solutions import (
    Ensemble,
    decompose_ensemble,
    decompose_path,
    extremal_ensemble,
    extremal_solution,
    general_ensemble,
    general_solution,
    sample_noise,
    torus_decompose,
    uniform_ensemble,
    uniform_solution,
)

Z4 = cyclic_group(4)
S3 = symmetric_group(3)


@pytest.fixture(scope="module")
def case_b():
    noise = constant_noise(delta(Z4, 1))
    return noise, compute_limit(noise)


@pytest.fixture(scope="module")
def case_c():
    noise = constant_noise(Measure(Z4, [0.5, 0.0, 0.5, 0.0]))
    return noise, compute_limit(noise)


@pytest.fixture(scope="module")
def case_a():
    noise = constant_noise(haar(Z4))
    return noise, compute_limit(noise)


def empirical(group, samples):
    return Measure(group, np.bincount(samples, minlength=group.order) / len(samples))


class TestSampleNoise:
    def test_dirac_noise_deterministic(self, case_b):
        noise, _ = case_b
        xi = sample_noise(noise, 10, np.random.default_rng(0))
        assert all(v == 1 for v in xi.values())
        assert set(xi) == set(range(-10, 1))

    def test_equal_seeds_identical(self, case_c):
        noise, _ = case_c
        a = sample_noise(noise, 20, np.random.default_rng(42))
        b = sample_noise(noise, 20, np.random.default_rng(42))
        assert a == b

    def test_marginal_law(self, case_a):
        noise, _ = case_a
        ens = uniform_ensemble(noise, depth=3, n_paths=100_000, seed=1)
        emp = empirical(Z4, ens.xi_col(0))
        assert tv_distance(emp, haar(Z4)) < 0.02


class TestUniformSolution:
    def test_single_path_recursion(self, case_c):
        noise, _ = case_c
        path = uniform_solution(noise, 12, np.random.default_rng(3))
        assert path.satisfies_recursion()
        assert path.kind == "uniform"

    def test_marginal_is_haar(self, case_c):
        noise, _ = case_c
        ens = uniform_ensemble(noise, depth=10, n_paths=10_000, seed=5)
        emp = empirical(Z4, ens.eta_col(0))
        assert tv_distance(emp, haar(Z4)) < 0.05

    def test_eta0_independent_of_xi0(self, case_c):
        from convlimit.stats import chi_square_independence

        noise, _ = case_c
        ens = uniform_ensemble(noise, depth=10, n_paths=10_000, seed=6)
        res = chi_square_independence(list(zip(ens.eta_col(0), ens.xi_col(0))))
        assert res.p_value > 0.01

    def test_ensemble_matches_chunked_determinism(self, case_c):
        noise, _ = case_c
        a = uniform_ensemble(noise, depth=5, n_paths=5000, seed=9)
        b = uniform_ensemble(noise, depth=5, n_paths=5000, seed=9)
        assert np.array_equal(a.eta, b.eta)
        assert np.array_equal(a.xi, b.xi)

    def test_thread_count_does_not_change_output(self, case_c, monkeypatch):
        noise, _ = case_c
        a = uniform_ensemble(noise, depth=5, n_paths=9000, seed=11)
        monkeypatch.setenv("CONV_LIMIT_THREADS", "4")
        b = uniform_ensemble(noise, depth=5, n_paths=9000, seed=11)
        assert np.array_equal(a.eta, b.eta)


class TestExtremalSolution:
    def test_case_b_deterministic_and_trivial_u(self, case_b):
        noise, res = case_b
        depth = 2 * res.depth_used
        path, dec = extremal_solution(noise, res, depth, np.random.default_rng(0))
        assert path.satisfies_recursion()
        assert all(u == 0 for u in dec.U.values())
        assert dec.reconstructs(path)
        # strong solution: eta is a function of the noise alone
        path2, _ = extremal_solution(noise, res, depth, np.random.default_rng(99))
        assert path.eta == path2.eta

    def test_case_b_matches_limit_law_exactly(self, case_b):
        noise, res = case_b
        path, _ = extremal_solution(noise, res, 2 * res.depth_used, np.random.default_rng(1))
        for k in range(path.k_min, 1):
            lam = res.lambdas[k]
            assert lam.weights[path.eta[k]] == 1.0

    def test_case_c_u0_uniform_on_h(self, case_c):
        from convlimit.stats import chi_square_uniformity

        noise, res = case_c
        ens = extremal_ensemble(noise, res, 2 * res.depth_used, 10_000, seed=7)
        u0 = ens.u_col(0)
        r = chi_square_uniformity(u0, res.subgroup)
        assert r.p_value > 0.01

    def test_case_c_marginal_matches_lambda0(self, case_c):
        noise, res = case_c
        ens = extremal_ensemble(noise, res, 2 * res.depth_used, 10_000, seed=8)
        emp = empirical(Z4, ens.eta_col(0))
        assert tv_distance(emp, res.lambda0) < 0.05

    def test_reconstruction_exact_every_path(self, case_c):
        noise, res = case_c
        ens = extremal_ensemble(noise, res, 2 * res.depth_used, 2000, seed=9)
        recon = Z4.mul[ens.phi, ens.U]
        assert np.array_equal(recon, ens.eta)

    def test_u_members_stay_in_h(self, case_c):
        noise, res = case_c
        ens = extremal_ensemble(noise, res, 2 * res.depth_used, 2000, seed=10)
        assert set(np.unique(ens.U)) <= set(res.subgroup.members)

    def test_pinned_u0(self, case_c):
        noise, res = case_c
        ens = extremal_ensemble(noise, res, 2 * res.depth_used, 100, seed=11, u0=2)
        assert (ens.u_col(0) == 2).all()

    def test_depth_validation(self, case_c):
        noise, res = case_c
        with pytest.raises(InvalidSpec):
            extremal_ensemble(noise, res, res.depth_used, 10, seed=0)

    def test_bad_u0_rejected(self, case_c):
        noise, res = case_c
        with pytest.raises(InvalidSpec):
            extremal_solution(noise, res, 2 * res.depth_used,
                              np.random.default_rng(0), u0=1)


class TestGeneralSolution:
    def test_identity_v_law_reproduces_extremal(self, case_c):
        noise, res = case_c
        path, dec = extremal_solution(noise, res, 2 * res.depth_used, np.random.default_rng(2))
        mixed, mdec = general_solution(path, dec, delta(Z4, 0), np.random.default_rng(3))
        assert mixed.eta == path.eta
        assert mdec.V == 0

    def test_haar_v_law_gives_haar_marginals(self, case_c):
        noise, res = case_c
        ens = extremal_ensemble(noise, res, 2 * res.depth_used, 10_000, seed=12)
        mixed = general_ensemble(ens, haar(Z4), seed=13)
        emp = empirical(Z4, mixed.eta_col(0))
        assert tv_distance(emp, haar(Z4)) < 0.05

    def test_point_v_law_translates_marginals(self, case_c):
        noise, res = case_c
        ens = extremal_ensemble(noise, res, 2 * res.depth_used, 10_000, seed=14)
        mixed = general_ensemble(ens, delta(Z4, 3), seed=15)
        emp = empirical(Z4, mixed.eta_col(0))
        assert tv_distance(emp, translate_right(res.lambda0, 3)) < 0.05

    def test_recursion_preserved(self, case_c):
        noise, res = case_c
        path, dec = extremal_solution(noise, res, 2 * res.depth_used, np.random.default_rng(4))
        mixed, _ = general_solution(path, dec, haar(Z4), np.random.default_rng(5))
        assert mixed.satisfies_recursion()


class TestDecompose:
    def test_round_trip_recovers_v_gauge(self, case_c):
        noise, res = case_c
        ens = extremal_ensemble(noise, res, 2 * res.depth_used, 3000, seed=16)
        mixed = general_ensemble(ens, haar(Z4), seed=17)
        dec, audit = decompose_ensemble(mixed, res, noise=noise)
        assert audit["exact_reconstruction"] == 3000
        # exact reconstruction per path
        recon = Z4.mul[dec.phi, Z4.mul[dec.U, dec.V[:, None]]]
        assert np.array_equal(recon, mixed.eta)
        # gauge: V = s(V^{-1} coset)^{-1}
        space = left_cosets(Z4, res.subgroup)
        sec = default_section(space)
        for v in np.unique(dec.V):
            vinv = int(Z4.inv[v])
            assert int(Z4.inv[sec.of(vinv)]) == v
        # recovered V sits in the drawn V's H-coset
        vdiff = Z4.mul[Z4.inv[mixed.V], dec.V]
        assert set(np.unique(vdiff)) <= set(res.subgroup.members)

    def test_single_path_round_trip(self, case_c):
        noise, res = case_c
        path, dec0 = extremal_solution(noise, res, 2 * res.depth_used, np.random.default_rng(6))
        mixed, _ = general_solution(path, dec0, delta(Z4, 3), np.random.default_rng(7))
        dec = decompose_path(mixed, res, noise=noise)
        assert dec.reconstructs(mixed)
        assert all(u in res.subgroup for u in dec.U.values())

    def test_case_b_noise_measurable(self, case_b):
        noise, res = case_b
        path, dec0 = extremal_solution(noise, res, 2 * res.depth_used, np.random.default_rng(8))
        mixed, _ = general_solution(path, dec0, delta(Z4, 2), np.random.default_rng(9))
        dec = decompose_path(mixed, res, noise=noise)
        # H trivial: U identically the identity and eta = phi * V
        assert all(u == 0 for u in dec.U.values())
        assert all(
            mixed.eta[k] == int(Z4.mul[dec.phi[k], dec.V]) for k in dec.phi
        )

    def test_case_a_degenerate_run(self, case_a):
        noise, res = case_a
        ens = extremal_ensemble(noise, res, 2 * res.depth_used, 500, seed=18)
        dec, _ = decompose_ensemble(ens, res, noise=noise)
        recon = Z4.mul[dec.phi, Z4.mul[dec.U, dec.V[:, None]]]
        assert np.array_equal(recon, ens.eta)
        # H = G: the coset part is constant and V is pinned to the identity gauge
        assert set(np.unique(dec.phi)) == {0}

    def test_uniform_solution_on_case_a_decomposes(self, case_a):
        # H = G degenerate run on the uniform solution: phi pinned to the
        # section representative, V to the identity gauge, U = eta exactly
        noise, res = case_a
        ens = uniform_ensemble(noise, depth=2 * res.depth_used, n_paths=300, seed=19)
        dec, audit = decompose_ensemble(ens, res, noise=noise, k_min=-8)
        assert audit["window"] == [-8, 0]
        assert set(np.unique(dec.phi)) == {0}
        assert set(np.unique(dec.V)) == {0}
        assert np.array_equal(dec.U, ens.eta[:, ens.eta.shape[1] - 9:])
        recon = Z4.mul[dec.phi, Z4.mul[dec.U, dec.V[:, None]]]
        assert np.array_equal(recon, dec.eta)

    def test_report_window_cannot_exceed_path_window(self, case_c):
        noise, res = case_c
        path, _ = extremal_solution(noise, res, 2 * res.depth_used, np.random.default_rng(20))
        with pytest.raises(InvalidSpec):
            decompose_path(path, res, noise=noise, k_min=path.k_min - 5)

    def test_gauge_invariance_across_sections(self, case_c):
        noise, res = case_c
        ens = extremal_ensemble(noise, res, 2 * res.depth_used, 1000, seed=19)
        mixed = general_ensemble(ens, haar(Z4), seed=20)
        space = left_cosets(Z4, res.subgroup)
        alt = section_from_representatives(space, [2, 3])
        d1, _ = decompose_ensemble(mixed, res, noise=noise)
        d2, _ = decompose_ensemble(mixed, res, section=alt, noise=noise)
        r1 = Z4.mul[d1.phi, Z4.mul[d1.U, d1.V[:, None]]]
        r2 = Z4.mul[d2.phi, Z4.mul[d2.U, d2.V[:, None]]]
        assert np.array_equal(r1, mixed.eta)
        assert np.array_equal(r2, mixed.eta)
        assert not np.array_equal(d1.phi, d2.phi)

    def test_corrupted_path_raises(self, case_c):
        noise, res = case_c
        path, dec0 = extremal_solution(noise, res, 2 * res.depth_used, np.random.default_rng(10))
        mixed, _ = general_solution(path, dec0, haar(Z4), np.random.default_rng(11))
        eta = dict(mixed.eta)
        eta[mixed.k_min] = (eta[mixed.k_min] + 1) % 4  # break the remote past
        broken = type(mixed)(group=mixed.group, eta=eta, xi=mixed.xi,
                             kind=mixed.kind, meta=mixed.meta)
        with pytest.raises(CosetNotStabilized):
            decompose_path(broken, res, noise=noise)

    def test_wrong_centering_detected(self, case_c):
        noise, res = case_c
        ens = extremal_ensemble(noise, res, 2 * res.depth_used, 50, seed=21)
        bad_alphas = dict(res.alphas)
        bad_alphas[-(ens.depth // 2)] = (bad_alphas[-(ens.depth // 2)] + 1) % 4
        doctored = type(res)(
            group=res.group, lambdas=res.lambdas, alphas=bad_alphas,
            subgroup=res.subgroup, case=res.case, depth_used=res.depth_used,
            deepest_depth=res.deepest_depth, k_min=res.k_min,
            residuals=res.residuals, shape_history=res.shape_history,
        )
        with pytest.raises(CosetNotStabilized):
            decompose_ensemble(ens, doctored)


class TestTorusDecompose:
    def test_p1_trivial_u(self, case_b):
        noise, res = case_b
        path, dec0 = extremal_solution(noise, res, 2 * res.depth_used, np.random.default_rng(12))
        mixed, _ = general_solution(path, dec0, delta(Z4, 1), np.random.default_rng(13))
        dec = torus_decompose(mixed, 1, res, noise=noise)
        assert all(u == 0 for u in dec.U.values())
        assert all((dec.phi[k] + dec.V) % 4 == mixed.eta[k] for k in dec.phi)

    def test_matches_group_engine_per_path(self, case_c):
        noise, res = case_c
        ens = extremal_ensemble(noise, res, 2 * res.depth_used, 200, seed=22)
        mixed = general_ensemble(ens, haar(Z4), seed=23)
        for i in range(0, 200, 17):
            path = mixed.path(i)
            d_group = decompose_path(path, res, noise=noise)
            d_torus = torus_decompose(path, 2, res, noise=noise)
            assert d_group.phi == d_torus.phi
            assert d_group.U == d_torus.U
            assert d_group.V == d_torus.V

    def test_u_uniform_on_h(self, case_c):
        from convlimit.stats import chi_square_uniformity

        noise, res = case_c
        ens = extremal_ensemble(noise, res, 2 * res.depth_used, 10_000, seed=24)
        mixed = general_ensemble(ens, haar(Z4), seed=25)
        u0 = []
        for i in range(500):
            d = torus_decompose(mixed.path(i), 2, res, noise=noise)
            u0.append(d.U[0])
        r = chi_square_uniformity(np.array(u0), res.subgroup)
        assert r.p_value > 0.01

    def test_grid_mismatch(self, case_c):
        noise, res = case_c
        path, _ = extremal_solution(noise, res, 2 * res.depth_used, np.random.default_rng(14))
        with pytest.raises(GridMismatch):
            torus_decompose(path, 3, res, noise=noise)

    def test_non_cyclic_group_rejected(self):
        noise = constant_noise(haar(S3))
        res = compute_limit(noise)
        path, _ = extremal_solution(noise, res, 2 * res.depth_used, np.random.default_rng(15))
        with pytest.raises(GridMismatch):
            torus_decompose(path, 2, res, noise=noise)


@pytest.fixture(scope="module")
def s3_case():
    lab = {name: i for i, name in enumerate(S3.element_labels)}
    w = np.zeros(6)
    for t in ("(12)", "(13)", "(23)"):
        w[lab[t]] = 1 / 3
    noise = constant_noise(Measure(S3, w))
    return noise, compute_limit(noise)


class TestNonAbelianPipeline:
    """S3 with a uniform-transposition tail: H = A3 and the noise-limit
    coset flips every step, exercising the order-sensitive algebra."""

    def test_classification(self, s3_case):
        _, res = s3_case
        assert res.case == "C"
        assert [S3.element_labels[g] for g in res.subgroup.members] == ["e", "(123)", "(132)"]

    def test_extremal_reconstruction_with_moving_cosets(self, s3_case):
        noise, res = s3_case
        ens = extremal_ensemble(noise, res, 2 * res.depth_used, 4000, seed=31)
        assert np.array_equal(S3.mul[ens.phi, ens.U], ens.eta)
        # the coset part genuinely moves: phi alternates between the A3
        # representative and a transposition, path-independently in parity
        assert set(np.unique(ens.phi)) == {0, 1}
        assert set(np.unique(ens.U)) <= set(res.subgroup.members)

    def test_u0_uniform_and_marginal(self, s3_case):
        from convlimit.stats import chi_square_uniformity

        noise, res = s3_case
        ens = extremal_ensemble(noise, res, 2 * res.depth_used, 10_000, seed=32)
        r = chi_square_uniformity(ens.u_col(0), res.subgroup)
        assert r.p_value > 0.01
        emp = empirical(S3, ens.eta_col(0))
        assert tv_distance(emp, res.lambda0) < 0.05

    def test_mixture_round_trip_exact(self, s3_case):
        noise, res = s3_case
        ens = extremal_ensemble(noise, res, 2 * res.depth_used, 4000, seed=33)
        mixed = general_ensemble(ens, haar(S3), seed=34)
        dec, audit = decompose_ensemble(mixed, res, noise=noise)
        assert audit["exact_reconstruction"] == 4000
        recon = S3.mul[dec.phi, S3.mul[dec.U, dec.V[:, None]]]
        assert np.array_equal(recon, mixed.eta)
        # gauge identity for the recovered V
        space = left_cosets(S3, res.subgroup)
        sec = default_section(space)
        for v in np.unique(dec.V):
            assert int(S3.inv[sec.of(int(S3.inv[v]))]) == v
        # recovered and drawn V agree up to a right H-factor: V_rec = h^-1 V
        shift = S3.mul[dec.V, S3.inv[mixed.V]]
        assert set(np.unique(shift)) <= set(res.subgroup.members)

    def test_verify_battery_green(self, s3_case):
        from convlimit.stats import verify_theorems

        noise, res = s3_case
        ens = extremal_ensemble(noise, res, 2 * res.depth_used, 10_000, seed=35)
        report = verify_theorems(noise, res, ens)
        assert report.passed, report.failures
        assert report.hiso_detected == res.subgroup.members


class TestEnsemblePlumbing:
    def test_records_schema(self, case_c):
        noise, res = case_c
        ens = extremal_ensemble(noise, res, 2 * res.depth_used, 3, seed=26)
        recs = ens.to_records()
        assert len(recs) == 3
        assert recs[0]["path_id"] == 0
        assert len(recs[0]["eta"]) == -ens.k_min + 1
        assert len(recs[0]["xi"]) == ens.depth + 1
        assert recs[0]["V"] is None

    def test_path_extraction_consistent(self, case_c):
        noise, res = case_c
        ens = extremal_ensemble(noise, res, 2 * res.depth_used, 5, seed=27)
        p = ens.path(2)
        assert p.satisfies_recursion()
        assert p.eta[0] == int(ens.eta_col(0)[2])
