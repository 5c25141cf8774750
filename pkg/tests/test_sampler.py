import numpy as np
import pytest
from scipy.special import expit, softmax

from crlmix.core import OrdinalDataset, kernel_log_pmf, log1m_sigmoid, log_sigmoid
from crlmix.errors import NumericFailure, SamplerError
from crlmix.priorspec import Variant, baseline_prior
from crlmix.randvar import RngStream, sample_inverse_wishart, sample_pg1
from crlmix import sampler as smp
from crlmix.sampler import (
    PosteriorDraws,
    RunConfig,
    check_state,
    init_state,
    lsbp_log_weights,
    lsbp_weights,
    run_chain,
    step_atoms_common,
    step_atoms_general,
    step_hyper_common,
    step_hyper_general,
    step_labels,
    step_weights_dp,
    step_weights_lsbp,
    stick_weights,
    sweep,
)

TIGHT = dict(rtol=1e-12, atol=1e-12)


def setup(toy_data, variant, L=4, seed=3):
    spec = baseline_prior(3, 2, variant, L=L)
    st = init_state(toy_data, spec, RngStream(seed, (0,)))
    return spec, st


def chol_draw(P, h, z):
    L = np.linalg.cholesky(P)
    return np.linalg.solve(P, h) + np.linalg.solve(L.T, z)


class TestWeights:
    def test_lsbp_hand(self):
        X = np.array([[1.0, 0.5], [1.0, -2.0]])
        g = np.array([[0.3, -1.0], [1.2, 0.4]])
        v = expit(X @ g.T)
        expect = np.column_stack([v[:, 0], v[:, 1] * (1 - v[:, 0]), (1 - v[:, 0]) * (1 - v[:, 1])])
        np.testing.assert_allclose(lsbp_weights(X, g), expect, **TIGHT)
        np.testing.assert_allclose(np.exp(lsbp_log_weights(X, g)), expect, rtol=1e-10)

    def test_sum_to_one_extreme(self, gen):
        X = np.column_stack([np.ones(50), gen.normal(0, 30, 50)])
        w = lsbp_weights(X, gen.normal(0, 5, (9, 2)))
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(np.isfinite(lsbp_log_weights(X, gen.normal(0, 50, (9, 2)))))

    def test_stick_weights(self):
        w = stick_weights(np.array([0.5, 0.5]))
        np.testing.assert_allclose(w, [0.5, 0.25, 0.25])
        assert stick_weights(np.zeros(0)).tolist() == [1.0]


class TestInit:
    @pytest.mark.parametrize("v", list(Variant))
    def test_valid(self, toy_data, v):
        spec, st = setup(toy_data, v)
        check_state(st, toy_data, spec)

    def test_dimension_mismatch(self, toy_data):
        with pytest.raises(Exception, match="C = 4"):
            init_state(toy_data, baseline_prior(4, 2), RngStream(0))


class TestAtomsReplay:
    def test_general(self, toy_data):
        spec, st = setup(toy_data, "General")
        before = st.copy()
        r = RngStream(5, (1,))
        step_atoms_general(st, toy_data, spec, r)
        X = toy_data.X
        for j in range(spec.J):
            gen = r.spawn(j).generator()
            rows = toy_data.trial_rows[j]
            lab = before.labels[rows]
            eta = np.einsum("ip,ip->i", X[rows], before.beta[j, lab])
            z = sample_pg1(eta, gen)
            np.testing.assert_array_equal(st.zeta[rows, j], z)
            noise = gen.standard_normal((spec.L, spec.p))
            Sinv = np.linalg.inv(before.Sigma[j])
            for l in range(spec.L):
                P = Sinv.copy()
                h = Sinv @ before.mu[j]
                for r_i, i in enumerate(rows):
                    if lab[r_i] == l:
                        P += z[r_i] * np.outer(X[i], X[i])
                        h += toy_data.upsilon[i, j] * X[i]
                np.testing.assert_allclose(st.beta[j, l], chol_draw(P, h, noise[l]), rtol=1e-9, atol=1e-10)
        assert np.all(np.isnan(st.zeta[toy_data.masses == 0]))

    def test_common(self, toy_data):
        spec, st = setup(toy_data, "CommonAtoms")
        before = st.copy()
        r = RngStream(6, (1,))
        step_atoms_common(st, toy_data, spec, r)
        for j in range(spec.J):
            gen = r.spawn(j).generator()
            rows = toy_data.trial_rows[j]
            lab = before.labels[rows]
            z = sample_pg1(before.theta[j, lab], gen)
            noise = gen.standard_normal(spec.L)
            s2 = before.sigma2[j]
            for l in range(spec.L):
                zs = sum(z[k] for k in range(rows.size) if lab[k] == l)
                us = sum(toy_data.upsilon[rows[k], j] for k in range(rows.size) if lab[k] == l)
                var = 1.0 / (zs + 1.0 / s2)
                mean = var * (us + before.mu[j] / s2)
                np.testing.assert_allclose(st.theta[j, l], mean + np.sqrt(var) * noise[l], **TIGHT)

    def test_thread_count_irrelevant(self, toy_data):
        spec, st = setup(toy_data, "General")
        a, b = st.copy(), st.copy()
        step_atoms_general(a, toy_data, spec, RngStream(1), threads=1)
        step_atoms_general(b, toy_data, spec, RngStream(1), threads=4)
        np.testing.assert_array_equal(a.beta, b.beta)


class TestWeightsReplay:
    @pytest.mark.parametrize("v", ["General", "CommonAtoms"])
    def test_lsbp(self, toy_data, v):
        spec, st = setup(toy_data, v, L=4)
        before = st.copy()
        r = RngStream(7, (2,))
        step_weights_lsbp(st, toy_data, spec, r)
        gen = r.generator()
        X, lab, K = toy_data.X, before.labels, spec.L - 1
        P = np.broadcast_to(np.linalg.inv(spec.Gamma0), (K, 2, 2)).copy()
        h = np.zeros((K, 2))
        for i in range(toy_data.n):
            for l in range(min(lab[i], K - 1) + 1):
                z = sample_pg1([X[i] @ before.gamma[l]], gen)[0]
                np.testing.assert_allclose(st.xi[i, l], z, rtol=1e-12)
                P[l] += z * np.outer(X[i], X[i])
                h[l] += ((lab[i] == l) - 0.5) * X[i]
        noise = gen.standard_normal((K, 2))
        for l in range(K):
            np.testing.assert_allclose(st.gamma[l], chol_draw(P[l], h[l], noise[l]), rtol=1e-9, atol=1e-10)
        check_state(st, toy_data, spec)

    def test_dp(self, toy_data):
        spec, st = setup(toy_data, "CommonWeights", L=5)
        st.labels = np.array([0, 0, 1, 3, 3, 3, 0])
        alpha = st.alpha
        r = RngStream(8, (2,))
        step_weights_dp(st, spec, r)
        gen = r.generator()
        M = np.array([3, 1, 0, 3, 0])
        after = np.array([4, 3, 3, 0])
        V = np.clip(gen.beta(1 + M[:-1], alpha + after), 1e-12, 1 - 1e-12)
        np.testing.assert_allclose(st.V, V, **TIGHT)
        rate = spec.b_alpha - np.log1p(-V).sum()
        np.testing.assert_allclose(st.alpha, gen.gamma(spec.a_alpha + 4) / rate, **TIGHT)

    def test_dp_beta_mean(self, toy_data):
        spec, st = setup(toy_data, "CommonWeights", L=3)
        st.labels = np.array([0, 0, 1, 2, 2, 2, 0])
        st.alpha = 1.5
        V = []
        for k in range(20_000):
            s = st.copy()
            s.alpha = 1.5
            step_weights_dp(s, spec, RngStream(k, (2,)))
            V.append(s.V)
        V = np.array(V)
        # Beta(1 + M_l, alpha + tail) means
        expect = np.array([4 / (4 + 1.5 + 4), 2 / (2 + 1.5 + 3)])
        se = V.std(axis=0) / np.sqrt(len(V))
        assert np.all(np.abs(V.mean(axis=0) - expect) < 4 * se)


class TestLabels:
    @pytest.mark.parametrize("v", list(Variant))
    def test_log_probs_enumeration(self, toy_data, v):
        spec, st = setup(toy_data, v, L=3)
        lp = smp.label_log_probs(st, toy_data, spec)
        lo, hi = np.log(1e-12), np.log1p(-1e-12)
        if v.lsbp_weights:
            eta = toy_data.X @ st.gamma.T
            ls = np.clip(log_sigmoid(eta), lo, hi)
            l1m = np.clip(log1m_sigmoid(eta), lo, hi)
        else:
            V = np.broadcast_to(np.clip(st.V, 1e-12, 1 - 1e-12), (toy_data.n, 2))
            ls, l1m = np.log(V), np.log1p(-V)
        logw = np.column_stack([ls, np.zeros(toy_data.n)])
        logw[:, 1:] += np.cumsum(l1m, axis=1)
        for i in range(toy_data.n):
            for l in range(3):
                if v.regression_atoms:
                    th = st.beta[:, l] @ toy_data.X[i]
                else:
                    th = st.theta[:, l]
                expect = logw[i, l] + kernel_log_pmf(toy_data.y[i], th)
                np.testing.assert_allclose(lp[i, l], expect, rtol=1e-9)

    @pytest.mark.parametrize("v", list(Variant))
    def test_replay(self, toy_data, v):
        spec, st = setup(toy_data, v, L=5)
        lp = smp.label_log_probs(st, toy_data, spec)
        r = RngStream(4, (3,))
        step_labels(st, toy_data, spec, r)
        u = r.generator().random(toy_data.n)
        pr = softmax(lp, axis=1)
        expect = np.minimum((np.cumsum(pr, axis=1) <= u[:, None]).sum(axis=1), 4)
        np.testing.assert_array_equal(st.labels, expect)

    def test_frequencies(self, toy_data):
        spec, st = setup(toy_data, "General", L=3)
        pr = softmax(smp.label_log_probs(st, toy_data, spec), axis=1)
        counts = np.zeros((toy_data.n, 3))
        for k in range(4000):
            s = st.copy()
            step_labels(s, toy_data, spec, RngStream(k, (3,)))
            counts[np.arange(toy_data.n), s.labels] += 1
        np.testing.assert_allclose(counts / 4000, pr, atol=0.03)


class TestHyperReplay:
    def test_general_single_occupied(self, toy_data):
        spec, st = setup(toy_data, "General", L=4)
        st.labels[:] = 2
        before = st.copy()
        r = RngStream(9, (4,))
        step_hyper_general(st, spec, r)
        for j in range(spec.J):
            gen = r.spawn(j).generator()
            b, m0, k0 = before.beta[j, 2], spec.mu0[j], spec.kappa0[j]
            Lstar = spec.Lambda0[j] + k0 / (1 + k0) * np.outer(b - m0, b - m0)
            Sig = sample_inverse_wishart(spec.nu0[j] + 1, Lstar, gen)
            np.testing.assert_allclose(st.Sigma[j], Sig, **TIGHT)
            mstar = (k0 * m0 + b) / (k0 + 1)
            mu = mstar + np.linalg.cholesky(Sig / (k0 + 1)) @ gen.standard_normal(2)
            np.testing.assert_allclose(st.mu[j], mu, **TIGHT)

    def test_general_two_occupied(self, toy_data):
        spec, st = setup(toy_data, "General", L=4)
        st.labels = np.array([0, 0, 3, 3, 0, 3, 3])
        before = st.copy()
        r = RngStream(9, (4,))
        step_hyper_general(st, spec, r)
        j = 1
        gen = r.spawn(j).generator()
        B = before.beta[j, [0, 3]]
        k0, m0 = spec.kappa0[j], spec.mu0[j]
        bbar = B.mean(axis=0)
        Lstar = (spec.Lambda0[j] + sum(np.outer(b - bbar, b - bbar) for b in B)
                 + 2 * k0 / (2 + k0) * np.outer(bbar - m0, bbar - m0))
        Sig = sample_inverse_wishart(spec.nu0[j] + 2, Lstar, gen)
        np.testing.assert_allclose(st.Sigma[j], Sig, **TIGHT)

    def test_common(self, toy_data):
        spec, st = setup(toy_data, "CommonAtoms", L=4)
        st.labels = np.array([1, 1, 2, 2, 1, 1, 2])
        before = st.copy()
        r = RngStream(10, (4,))
        step_hyper_common(st, spec, r)
        gen = r.generator()
        th = before.theta[:, [1, 2]]
        tbar = th.mean(axis=1)
        ss = ((th - tbar[:, None]) ** 2).sum(axis=1)
        v0 = spec.nu0
        bstar = spec.b0 + ss / 2 + (2 * v0 / (2 + v0)) * (tbar - spec.mu0) ** 2 / 2
        s2 = bstar / gen.gamma(spec.a0 + 1.0)
        np.testing.assert_allclose(st.sigma2, s2, **TIGHT)
        mstar = (v0 * spec.mu0 + 2 * tbar) / (v0 + 2)
        np.testing.assert_allclose(st.mu, mstar + np.sqrt(s2 / (v0 + 2)) * gen.standard_normal(2), **TIGHT)


class TestChain:
    @pytest.mark.parametrize("v", list(Variant))
    def test_sweeps_keep_invariants(self, toy_data, v):
        spec, st = setup(toy_data, v, L=6)
        for t in range(1, 30):
            sweep(st, toy_data, spec, RngStream(2, (t,)))
            check_state(st, toy_data, spec)

    def test_schedule(self):
        run = RunConfig(n_iter=20, burn_in=5, thin=3)
        assert [t for t in range(1, 21) if run.keep(t)] == [8, 11, 14, 17, 20]
        assert run.n_kept == 5
        with pytest.raises(Exception):
            RunConfig(n_iter=5, burn_in=5)

    @pytest.mark.parametrize("v", list(Variant))
    def test_write_read_round_trip(self, toy_data, v, tmp_path):
        spec = baseline_prior(3, 2, v, L=5)
        draws = run_chain(toy_data, spec, RunConfig(40, 10, 5, seed=1))
        draws.write(tmp_path / "d.jsonl")
        back = PosteriorDraws.read(tmp_path / "d.jsonl")
        assert len(back) == 6
        np.testing.assert_array_equal(back.atoms(), draws.atoms())
        np.testing.assert_array_equal(back.label_counts, draws.label_counts)
        back.write(tmp_path / "e.jsonl")
        assert (tmp_path / "d.jsonl").read_bytes() == (tmp_path / "e.jsonl").read_bytes()

    def test_threads_byte_identical(self, toy_data, tmp_path):
        spec = baseline_prior(3, 2, "General", L=5)
        for th in (1, 3):
            run = RunConfig(30, 10, 2, seed=4, parallel_categories=True, threads=th)
            run_chain(toy_data, spec, run).write(tmp_path / f"t{th}.jsonl")
        assert (tmp_path / "t1.jsonl").read_bytes() == (tmp_path / "t3.jsonl").read_bytes()

    def test_hash_mismatch(self, toy_data, tmp_path):
        spec = baseline_prior(3, 2, "General", L=3)
        run_chain(toy_data, spec, RunConfig(6, 2, 2)).write(tmp_path / "d.jsonl")
        text = (tmp_path / "d.jsonl").read_text().replace('"spec_hash": "', '"spec_hash": "x', 1)
        (tmp_path / "d.jsonl").write_text(text)
        with pytest.raises(Exception, match="hash"):
            PosteriorDraws.read(tmp_path / "d.jsonl")

    def test_failure_carries_iteration(self, toy_data, monkeypatch):
        spec = baseline_prior(3, 2, "General", L=3)
        calls = {"n": 0}
        real = smp.step_labels

        def flaky(*a, **k):
            calls["n"] += 1
            if calls["n"] == 4:
                raise NumericFailure("boom")
            return real(*a, **k)

        monkeypatch.setattr(smp, "step_labels", flaky)
        with pytest.raises(SamplerError, match="iteration 4: boom") as err:
            run_chain(toy_data, spec, RunConfig(10, 2, 1))
        assert err.value.iteration == 4

    def test_empty_data_chain(self):
        data = OrdinalDataset.empty(3, 2)
        draws = run_chain(data, baseline_prior(3, 2, L=4), RunConfig(20, 5, 1))
        assert len(draws) == 15 and draws.label_counts.sum() == 0

    def test_posterior_moves_toward_data(self):
        # all responses in the first category push phi(theta_1) upward
        X = np.column_stack([np.ones(200), np.linspace(-1, 1, 200)])
        data = OrdinalDataset(np.ones(200, dtype=int), X, 3)
        draws = run_chain(data, baseline_prior(3, 2, "CommonAtoms", L=3), RunConfig(400, 100, 1, seed=2))
        w = draws.label_counts / 200
        th1 = (w * draws.theta[:, 0]).sum(axis=1)
        assert expit(th1.mean()) > 0.95
