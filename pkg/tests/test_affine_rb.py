import time

import numpy as np
import pytest

from romkit.errors import ConfigurationError, RankError
from romkit.affine_rb import demo_problem, fom_solve, rb_offline, rb_online


@pytest.fixture(scope="module")
def small_problem():
    return demo_problem(n_dof=256)


@pytest.fixture(scope="module")
def trained_space(small_problem):
    # the two-domain solution manifold is spanned by three piecewise
    # polynomials, so rank 3 captures it to machine precision
    mus = np.linspace(0.1, 10.0, 12)[:, None]
    return rb_offline(small_problem, mus, n_modes=3)


class TestFomSolve:
    def test_uniform_conductivity_scaling(self):
        prob = demo_problem(n_dof=128, kind="uniform")
        _, s1 = fom_solve(prob, [2.0])
        _, s2 = fom_solve(prob, [4.0])
        assert s2 == pytest.approx(s1 / 2.0, rel=1e-12)

    def test_identity_like_system(self):
        import scipy.sparse as sp
        from romkit.affine_rb import AffineProblem

        n = 5
        e1 = np.zeros(n)
        e1[0] = 1.0
        prob = AffineProblem(
            A_blocks=[sp.eye(n, format="csr")],
            f_blocks=[e1],
            theta_a=lambda mu: np.array([1.0]),
            theta_f=lambda mu: np.array([1.0]),
            param_box=np.array([[0.0, 1.0]]),
        )
        u, s = fom_solve(prob, [0.5])
        assert np.allclose(u, e1)
        assert s == pytest.approx(1.0, abs=1e-14)

    def test_matches_dense_oracle(self, small_problem, rng):
        mu = np.array([3.7])
        A, f = small_problem.assemble(mu)
        u_dense = np.linalg.solve(A.toarray(), f)
        u, s = fom_solve(small_problem, mu)
        assert np.abs(u - u_dense).max() <= 1e-10 * np.abs(u_dense).max()
        assert s == pytest.approx(f @ u_dense, rel=1e-10)

    def test_outside_box_rejected(self, small_problem):
        with pytest.raises(ConfigurationError):
            fom_solve(small_problem, [100.0])

    def test_analytic_two_domain_output(self):
        # kappa piecewise constant: exact solution is piecewise quadratic;
        # s(mu) = integral of u. P1 FEM on aligned mesh is nodally exact.
        prob = demo_problem(n_dof=255)  # even element count, interface on a node
        mu = 2.0
        _, s = fom_solve(prob, [mu])

        def exact_s(k1):
            # -(k u')' = 1, u(0)=u(1)=0, kappa=k1 on (0,.5), 1 on (.5,1);
            # flux sigma = kappa u' = sigma0 - x, and u(1)=0 fixes
            # sigma0 = (1 + 3 k1) / (4 (1 + k1))
            from scipy.integrate import quad

            c = (1.0 + 3.0 * k1) / (4.0 * (1.0 + k1))
            def up(x):
                return (c - x) / (k1 if x < 0.5 else 1.0)
            def u(x):
                val, _ = quad(lambda y: up(y), 0.0, x, points=[0.5])
                return val
            val, _ = quad(u, 0.0, 1.0, limit=200, points=[0.5])
            return val

        assert s == pytest.approx(exact_s(mu), rel=1e-4)


class TestOffline:
    def test_single_snapshot_basis(self, small_problem):
        space = rb_offline(small_problem, [[1.0]], n_modes=1)
        u, _ = fom_solve(small_problem, [1.0])
        # basis spans the snapshot direction
        coef = np.linalg.lstsq(space.basis, u, rcond=None)[0]
        assert np.abs(space.basis @ coef - u).max() <= 1e-10 * np.abs(u).max()

    def test_two_dim_manifold_exactly_captured(self):
        # fixed operator with two load blocks: u(mu) = mu_1 A^-1 f_1 + mu_2 A^-1 f_2
        # lives in an exactly two-dimensional space by construction
        import scipy.sparse as sp
        from romkit.affine_rb import AffineProblem

        base = demo_problem(n_dof=128, kind="uniform")
        A1 = base.A_blocks[0]
        n = A1.shape[0]
        f1 = np.asarray(base.f_blocks[0])
        f2 = np.sin(np.linspace(0, np.pi, n))
        prob = AffineProblem(
            A_blocks=[A1],
            f_blocks=[f1, f2],
            theta_a=lambda mu: np.array([1.0]),
            theta_f=lambda mu: np.array([mu[0], mu[1]]),
            param_box=np.array([[0.1, 10.0], [0.1, 10.0]]),
        )
        mus = np.array([[0.5, 3.0], [1.0, 0.5], [2.0, 2.0], [5.0, 1.0]])
        space = rb_offline(prob, mus, n_modes=2)
        from romkit.pod import RANK_CUTOFF

        assert space.eigenvalues[2] <= RANK_CUTOFF * space.eigenvalues[0]
        for mu in ((0.31, 4.2), (4.2, 0.9), (9.0, 9.0)):
            u, _ = fom_solve(prob, mu)
            resid = u - space.basis @ np.linalg.lstsq(space.basis, u, rcond=None)[0]
            assert np.abs(resid).max() <= 1e-10 * np.abs(u).max()

    def test_reduced_blocks_match_dense_oracle(self, small_problem, trained_space):
        Z = trained_space.basis
        for q, blk in enumerate(small_problem.A_blocks):
            direct = Z.T @ (blk.toarray() @ Z)
            assert np.abs(direct - trained_space.reduced.A_rb[q]).max() <= 1e-13 * max(
                1.0, np.abs(direct).max())
        direct_f = Z.T @ small_problem.f_blocks[0]
        assert np.allclose(direct_f, trained_space.reduced.f_rb[0], rtol=1e-13, atol=1e-15)

    def test_rank_guard(self, small_problem):
        with pytest.raises(RankError):
            rb_offline(small_problem, [[1.0], [2.0]], n_modes=3)

    def test_energy_orthonormal(self, small_problem, trained_space):
        X, _ = small_problem.assemble(trained_space.mu_bar)
        G = trained_space.basis.T @ (X @ trained_space.basis)
        assert np.abs(G - np.eye(trained_space.n_modes)).max() < 1e-10


class TestOnline:
    def test_snapshot_reproduction(self, small_problem):
        mus = np.linspace(0.1, 10.0, 8)[:, None]
        space = rb_offline(small_problem, mus, n_modes=3)
        for mu in mus:
            _, s_fom = fom_solve(small_problem, mu)
            _, s_rb = rb_online(space, mu)
            assert s_rb == pytest.approx(s_fom, rel=1e-10)

    def test_compliance_lower_bound(self, small_problem, trained_space):
        for mu in np.linspace(0.1, 10.0, 21):
            _, s_fom = fom_solve(small_problem, [mu])
            _, s_rb = rb_online(trained_space, [mu])
            assert s_fom - s_rb >= -1e-12 * abs(s_fom)

    def test_error_decay_in_n(self, small_problem):
        mus = np.linspace(0.1, 10.0, 12)[:, None]
        test_grid = np.linspace(0.15, 9.9, 50)
        max_err = []
        for n in range(1, 4):
            space = rb_offline(small_problem, mus, n_modes=n)
            errs = []
            for mu in test_grid:
                _, s_fom = fom_solve(small_problem, [mu])
                _, s_rb = rb_online(space, [mu])
                errs.append(abs(s_fom - s_rb))
            max_err.append(max(errs))
        assert all(e1 <= e0 * (1 + 1e-9) for e0, e1 in zip(max_err, max_err[1:]))
        assert max_err[-1] < 1e-8 * abs(max_err[0] + 1e-300) or max_err[-1] < 1e-12

    def test_cea_energy_optimality(self, small_problem, trained_space):
        """Galerkin equals the energy projection for symmetric problems."""
        mu = np.array([2.9])
        A, f = small_problem.assemble(mu)
        u, _ = fom_solve(small_problem, mu)
        coeff, _ = rb_online(trained_space, mu)
        u_rb = trained_space.basis @ coeff
        Ad = A.toarray()
        err_galerkin = np.sqrt((u - u_rb) @ (Ad @ (u - u_rb)))
        Z = trained_space.basis
        G = Z.T @ (Ad @ Z)
        best = Z @ np.linalg.solve(G, Z.T @ (Ad @ u))
        err_best = np.sqrt((u - best) @ (Ad @ (u - best)))
        assert err_galerkin == pytest.approx(err_best, rel=1e-10)

    def test_kolmogorov_proxy_reported(self, trained_space):
        w = trained_space.eigenvalues
        assert w[0] > 0 and np.all(np.diff(w) <= 1e-12 * w[0])


class TestOnlineCost:
    def test_online_touches_only_reduced_data(self, trained_space):
        model = trained_space.reduced
        n = trained_space.n_modes
        assert model.A_rb.shape[1:] == (n, n)
        assert model.f_rb.shape[1] == n
        # the online payload carries no full-dimension array
        n_delta = trained_space.basis.shape[0]
        assert all(arr.size < n_delta for arr in (model.A_rb, model.f_rb))

    def test_speed_ratio_at_4096(self):
        prob = demo_problem(n_dof=4096)
        mus = np.linspace(0.1, 10.0, 10)[:, None]
        space = rb_offline(prob, mus, n_modes=3)
        mu = np.array([3.3])
        fom_solve(prob, mu)
        rb_online(space, mu)

        reps = 7
        t_fom = []
        for _ in range(reps):
            t0 = time.perf_counter()
            fom_solve(prob, mu)
            t_fom.append(time.perf_counter() - t0)
        t_rb = []
        for _ in range(200):
            t0 = time.perf_counter()
            rb_online(space.reduced, mu)
            t_rb.append(time.perf_counter() - t0)
        ratio = np.median(t_fom) / np.median(t_rb)
        assert ratio >= 100.0, f"online speedup only {ratio:.0f}x"
