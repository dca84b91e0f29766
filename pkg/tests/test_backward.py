import numpy as np
import pytest
from conftest import hmm_forward_backward, random_model

from mrsar.backward import (
    InternalInconsistencyError,
    backward_smooth,
    pairwise_smoothed,
)
from mrsar.densities import log_density_iid
from mrsar.forward import ZeroLikelihoodError, forward_normalized
from mrsar.model import MrsModel, RegimeSpec, model_1, model_2
from mrsar.oracle import brute_likelihood


def flat_ar(mu, sigma2):
    """AR regime with phi = 0: an i.i.d. normal in disguise."""
    return RegimeSpec("ar1", alpha=mu, phi=0.0, sigma2=sigma2)


class TestTerminalLayer:
    def test_gamma_T_is_filtered_T_exactly(self, rng):
        m = random_model(rng, 3, 2)
        x = rng.normal(size=9)
        fwd = forward_normalized(m, x)
        sm = backward_smooth(m, fwd)
        g = fwd.graph
        lo, hi = g.offsets[8], g.offsets[9]
        np.testing.assert_array_equal(sm.gamma[lo:hi], fwd.filtered[lo:hi])

    def test_single_observation(self):
        m = model_1()
        fwd = forward_normalized(m, np.array([0.4]))
        sm = backward_smooth(m, fwd)
        np.testing.assert_array_equal(sm.gamma, fwd.filtered)
        assert sm.pairwise.shape == (1, 2, 2)
        assert sm.pairwise[0].sum() == 0.0


class TestOracleEquivalence:
    def check(self, m, x, D=None, tol=1e-10):
        fwd = forward_normalized(m, x, D=D)
        sm = backward_smooth(m, fwd)
        res = brute_likelihood(m, x, D=D)
        T1 = len(x)
        for t in range(T1):
            gd = sm.gamma_dict(t)
            for key, p in gd.items():
                assert abs(p - res.state_post[t].get(key, 0.0)) < tol
        np.testing.assert_allclose(sm.regime_marginal, res.regime_post,
                                   atol=tol)
        np.testing.assert_allclose(sm.pairwise, res.pairwise, atol=tol)

    def test_grid_against_oracle(self, rng):
        for M, k in [(2, 1), (3, 1), (3, 2), (2, 2)]:
            for T in (4, 7):
                m = random_model(rng, M, k)
                x = rng.normal(size=T + 1)
                self.check(m, x)

    def test_truncated_grid_against_oracle(self, rng):
        for D in (3, 5):
            m = random_model(rng, 2, 1)
            x = rng.normal(size=9)
            self.check(m, x, D=D)

    def test_counter_marginals(self, rng):
        m = random_model(rng, 3, 2)
        x = rng.normal(size=8)
        fwd = forward_normalized(m, x)
        sm = backward_smooth(m, fwd)
        res = brute_likelihood(m, x)
        for t in (0, 3, 7):
            for i in range(2):
                got = sm.counter_marginal(t, i)
                # joint law of (regime i occupied, counter value)
                want = {}
                for (n, r), p in res.state_post[t].items():
                    if r == i:
                        want[n[i]] = want.get(n[i], 0.0) + p
                for mval, p in got.items():
                    assert p == pytest.approx(want.get(mval, 0.0),
                                              abs=1e-10)
                assert sum(got.values()) == pytest.approx(
                    sm.regime_marginal[t, i], abs=1e-10)
        with pytest.raises(ValueError):
            sm.counter_marginal(0, 2)


class TestHmmCrossCheck:
    def test_flat_ar_pair_matches_plain_hmm(self, rng):
        # with phi = 0 everywhere the counters are inert and the model
        # is an ordinary 2-state HMM with normal emissions
        m = MrsModel(
            regimes=(flat_ar(0.0, 1.0), flat_ar(2.0, 0.5)),
            P=np.array([[0.8, 0.2], [0.3, 0.7]]),
            pi=np.array([0.6, 0.4]),
        )
        x = rng.normal(size=10)
        dens = np.empty((10, 2))
        for j, (mu, s2) in enumerate([(0.0, 1.0), (2.0, 0.5)]):
            dens[:, j] = np.exp(-0.5 * (x - mu) ** 2 / s2) / np.sqrt(
                2 * np.pi * s2)
        ll, gamma, pair = hmm_forward_backward(m.pi, m.P, dens)
        fwd = forward_normalized(m, x)
        sm = backward_smooth(m, fwd)
        assert fwd.loglik == pytest.approx(ll, abs=1e-11)
        np.testing.assert_allclose(sm.regime_marginal, gamma, atol=1e-11)
        np.testing.assert_allclose(sm.pairwise, pair, atol=1e-11)

    def test_mixed_ar_and_iid_pairwise_sums(self, rng):
        m = random_model(rng, 3, 1)
        x = rng.normal(size=11)
        fwd = forward_normalized(m, x)
        sm = backward_smooth(m, fwd)
        # row sums of the pairwise slice at t reproduce the marginal at
        # t-1 and column sums the marginal at t
        for t in range(1, 11):
            np.testing.assert_allclose(sm.pairwise[t].sum(axis=1),
                                       sm.regime_marginal[t - 1],
                                       atol=1e-9)
            np.testing.assert_allclose(sm.pairwise[t].sum(axis=0),
                                       sm.regime_marginal[t],
                                       atol=1e-9)
        assert sm.pairwise[0].sum() == 0.0


class TestDegenerateChain:
    def test_point_mass_path(self):
        reg = RegimeSpec("ar1", alpha=0.0, phi=0.5, sigma2=1.0)
        m = MrsModel(
            regimes=(reg, RegimeSpec("normal", mu=0.0, sigma2=1.0)),
            P=np.array([[1.0, 0.0], [0.0, 1.0]]),
            pi=np.array([1.0, 0.0]),
        )
        x = np.array([0.1, 0.4, -0.2, 0.9])
        fwd = forward_normalized(m, x)
        sm = backward_smooth(m, fwd)
        np.testing.assert_allclose(sm.regime_marginal[:, 0], np.ones(4),
                                   atol=1e-12)
        for t in range(1, 4):
            assert sm.pairwise[t, 0, 0] == pytest.approx(1.0, abs=1e-12)
            assert sm.pairwise[t].sum() == pytest.approx(1.0, abs=1e-12)


class TestErrorPaths:
    def test_partial_forward_rejected(self):
        m = MrsModel(
            regimes=(RegimeSpec("ar1", alpha=0.0, phi=0.5, sigma2=1.0),
                     RegimeSpec("lognormal", mu=0.0, sigma2=1.0, q=0.0,
                                sign=1)),
            P=np.array([[0.0, 1.0], [0.0, 1.0]]),
            pi=np.array([0.0, 1.0]),
        )
        x = np.array([2.0, 3.0, -4.0, 1.0])
        with pytest.raises(ZeroLikelihoodError) as exc:
            forward_normalized(m, x)
        with pytest.raises(ValueError, match="partial"):
            backward_smooth(m, exc.value.partial)

    def test_tampered_prediction_detected(self, rng):
        m = random_model(rng, 2, 1)
        x = rng.normal(size=6)
        fwd = forward_normalized(m, x)
        g = fwd.graph
        lo, hi = g.offsets[3], g.offsets[4]
        fwd.pred[lo:hi] = 0.0
        with pytest.raises(InternalInconsistencyError, match="t=3"):
            backward_smooth(m, fwd)

    def test_pairwise_helper_checks_graph_identity(self, rng):
        m = random_model(rng, 2, 1)
        x = rng.normal(size=6)
        fwd = forward_normalized(m, x)
        sm = backward_smooth(m, fwd)
        pw = pairwise_smoothed(m, fwd, sm)
        assert pw is sm.pairwise


class TestAggregates:
    def test_stats_weights_total(self, rng):
        # every (t, state) pair contributes its gamma mass to exactly one
        # bucket of its regime, so bucket weights sum to the regime
        # occupation time
        m = random_model(rng, 3, 2)
        x = rng.normal(size=10)
        fwd = forward_normalized(m, x)
        sm = backward_smooth(m, fwd)
        for i in range(2):
            wsum = sm.ar_aggs[i, :, 0].sum()
            assert wsum == pytest.approx(sm.regime_marginal[:, i].sum(),
                                         abs=1e-10)

    def test_moment_columns_consistent(self, rng):
        m = random_model(rng, 2, 1)
        x = rng.normal(size=9)
        fwd = forward_normalized(m, x)
        sm = backward_smooth(m, fwd)
        res = brute_likelihood(m, x)
        # rebuild the lag-m buckets directly from oracle posteriors
        want = np.zeros_like(sm.ar_aggs)
        for t in range(9):
            for (n, r), p in res.state_post[t].items():
                if r != 0 or p == 0.0:
                    continue
                mlag = n[0]
                slot = 0 if mlag > t else mlag
                xl = x[t - mlag] if slot else 0.0
                want[0, slot] += (p, p * x[t], p * xl, p * xl * xl,
                                  p * x[t] * xl, p * x[t] * x[t])
        np.testing.assert_allclose(sm.ar_aggs, want, atol=1e-10)

    def test_iid_weight_recovery(self, rng):
        # regime marginals integrate the smoothed gammas; check the iid
        # column against a direct dict sum
        m = random_model(rng, 2, 1)
        x = rng.normal(size=8)
        fwd = forward_normalized(m, x)
        sm = backward_smooth(m, fwd)
        for t in range(8):
            tot = sum(p for (n, r), p in sm.gamma_dict(t).items()
                      if r == 1)
            assert sm.regime_marginal[t, 1] == pytest.approx(tot,
                                                             abs=1e-12)
