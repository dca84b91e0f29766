import json

import numpy as np
import pytest

from mrsar.model import (
    EmConfig,
    ModelError,
    MrsModel,
    RegimeSpec,
    canonical_labels,
    model_1,
    model_2,
    parse_kv,
    spike_example_model,
)


def lognormal_pair_model():
    """One AR base regime plus a lognormal spike regime (M=2, k=1)."""
    return MrsModel(
        regimes=(
            RegimeSpec("ar1", alpha=0.1, phi=0.8, sigma2=0.5),
            RegimeSpec("lognormal", mu=1.0, sigma2=0.7, q=2.5, sign=1),
        ),
        P=np.array([[0.95, 0.05], [0.4, 0.6]]),
        pi=np.array([0.9, 0.1]),
    )


def three_regime_model():
    """AR base + lognormal spike + lognormal drop (M=3, k=1)."""
    return MrsModel(
        regimes=(
            RegimeSpec("ar1", alpha=0.0, phi=0.7, sigma2=1.0),
            RegimeSpec("lognormal", mu=1.0, sigma2=0.5, q=3.0, sign=1),
            RegimeSpec("lognormal", mu=0.5, sigma2=0.5, q=-3.0, sign=-1),
        ),
        P=np.array([[0.9, 0.05, 0.05], [0.5, 0.4, 0.1], [0.5, 0.1, 0.4]]),
        pi=np.array([1.0, 0.0, 0.0]),
    )


class TestValidation:
    def test_benchmark_models_are_valid(self):
        for m in (model_1(), model_2(), spike_example_model(),
                  lognormal_pair_model(), three_regime_model()):
            assert m.violations() == []
            m.validate()

    def test_phi_at_unit_boundary_names_phi(self):
        m = MrsModel(
            regimes=(RegimeSpec("ar1", alpha=0.0, phi=1.0, sigma2=1.0),),
            P=np.array([[1.0]]),
            pi=np.array([1.0]),
        )
        bad = m.violations()
        assert len(bad) == 1
        assert "phi" in bad[0]

    def test_bad_row_sum_names_row(self):
        m = MrsModel(
            regimes=model_1().regimes,
            P=np.array([[0.9, 0.09], [0.1, 0.9]]),
            pi=np.array([0.5, 0.5]),
        )
        bad = m.violations()
        assert len(bad) == 1
        assert bad[0].startswith("P.0")

    def test_noncontiguous_ar_block_rejected(self):
        m = MrsModel(
            regimes=(
                RegimeSpec("normal", mu=0.0, sigma2=1.0),
                RegimeSpec("ar1", alpha=0.0, phi=0.5, sigma2=1.0),
            ),
            P=np.array([[0.5, 0.5], [0.5, 0.5]]),
            pi=np.array([0.5, 0.5]),
        )
        assert any("leading block" in v for v in m.violations())
        with pytest.raises(ModelError):
            m.validate()

    def test_missing_field_and_bad_sign(self):
        assert any("sigma2" in v
                   for v in RegimeSpec("normal", mu=0.0).violations())
        bad = RegimeSpec("gamma", mu=2.0, sigma2=1.0, q=0.0,
                         sign=0).violations()
        assert any("sign" in v for v in bad)

    def test_negative_sigma2_and_gamma_shape(self):
        assert RegimeSpec("normal", mu=0.0, sigma2=-1.0).violations()
        assert RegimeSpec("gamma", mu=-2.0, sigma2=1.0).violations()

    def test_pi_sum_violation(self):
        m = MrsModel(
            regimes=model_1().regimes,
            P=model_1().P,
            pi=np.array([0.5, 0.6]),
        )
        assert any(v.startswith("pi") for v in m.violations())

    def test_validate_is_pure(self):
        m = model_1()
        first = m.violations()
        second = m.violations()
        assert first == second == []


class TestParameterCount:
    def test_ar_plus_lognormal_pair(self):
        # 3 (ar1) + 2 (lognormal; q and sign are fixed inputs) + 2x1
        assert lognormal_pair_model().num_free_parameters() == 7

    def test_single_normal_regime(self):
        m = MrsModel(regimes=(RegimeSpec("normal", mu=0.0, sigma2=1.0),),
                     P=np.array([[1.0]]), pi=np.array([1.0]))
        assert m.num_free_parameters() == 2

    def test_three_regime_spike_drop(self):
        # 3 + 2 + 2 + 3x2 transitions
        assert three_regime_model().num_free_parameters() == 13

    def test_estimated_pi_adds_m_minus_1(self):
        m = lognormal_pair_model()
        assert (m.num_free_parameters(pi_estimated=True)
                == m.num_free_parameters() + 1)


class TestSerialization:
    @pytest.mark.parametrize("make", [model_1, model_2, spike_example_model,
                                      lognormal_pair_model,
                                      three_regime_model])
    def test_kv_roundtrip_bit_exact(self, make):
        m = make()
        again = MrsModel.from_kv(m.to_kv())
        assert again.regimes == m.regimes
        assert np.array_equal(again.P, m.P)
        assert np.array_equal(again.pi, m.pi)

    def test_kv_roundtrip_awkward_floats(self):
        m = MrsModel(
            regimes=(RegimeSpec("ar1", alpha=0.1 + 0.2, phi=1 / 3,
                                sigma2=np.pi),),
            P=np.array([[1.0]]),
            pi=np.array([1.0]),
        )
        again = MrsModel.from_kv(m.to_kv())
        assert again.regimes[0].alpha == m.regimes[0].alpha
        assert again.regimes[0].phi == m.regimes[0].phi
        assert again.regimes[0].sigma2 == m.regimes[0].sigma2

    def test_json_roundtrip(self):
        m = three_regime_model()
        again = MrsModel.from_json(m.to_json())
        assert again.regimes == m.regimes
        assert np.array_equal(again.P, m.P)
        assert np.array_equal(again.pi, m.pi)
        # and the payload is plain JSON
        obj = json.loads(m.to_json())
        assert set(obj) == {"regimes", "P", "pi"}

    def test_kv_comments_and_whitespace(self):
        text = model_1().to_kv() + "\n# trailing comment\n\n"
        MrsModel.from_kv(text)
        kv = parse_kv("a = 1  # inline\n\nb=2\n")
        assert kv == {"a": "1", "b": "2"}

    def test_kv_malformed_line_rejected(self):
        with pytest.raises(ModelError, match="line"):
            parse_kv("this is not a key value line\n")


class TestEmConfig:
    def test_defaults_validate(self):
        cfg = EmConfig()
        cfg.validate()
        assert cfg.tol == 1.5e-8
        assert cfg.truncation_D is None

    def test_bad_values_rejected(self):
        with pytest.raises(ModelError):
            EmConfig(tol=0.0).validate()
        with pytest.raises(ModelError):
            EmConfig(truncation_D=1).validate()
        with pytest.raises(ModelError):
            EmConfig(pij_delta=0.5).validate()

    def test_kv_roundtrip(self):
        cfg = EmConfig(tol=1e-6, max_iters=77, restarts=3, truncation_D=None,
                       sigma2_floor=None, pij_delta=0.01, estimate_pi=False,
                       seed=42, mu_max=500.0)
        again = EmConfig.from_kv(cfg.to_kv())
        assert again == cfg

    def test_kv_roundtrip_finite_truncation(self):
        cfg = EmConfig(truncation_D=40, sigma2_floor=0.0)
        again = EmConfig.from_kv(cfg.to_kv())
        assert again == cfg

    def test_replace(self):
        cfg = EmConfig().replace(truncation_D=56)
        assert cfg.truncation_D == 56
        assert cfg.tol == 1.5e-8


class TestRelabeling:
    def test_permuted_swaps_everything(self):
        m = model_2()
        swapped = m.permuted([1, 0])
        assert swapped.regimes[0].phi == 0.4
        assert swapped.P[0, 0] == m.P[1, 1]
        assert swapped.pi[0] == m.pi[1]

    def test_canonical_orders_phi_descending(self):
        m = model_2().permuted([1, 0])
        canon = canonical_labels(m)
        assert canon.regimes[0].phi == 0.9
        assert canon.regimes[1].phi == 0.4
        # already-ordered models come back unchanged
        assert canonical_labels(model_2()) is model_2() or (
            canonical_labels(model_2()).regimes == model_2().regimes)

    def test_canonical_ignores_iid_tail(self):
        m = three_regime_model()
        assert canonical_labels(m).regimes == m.regimes

    def test_theta_vector_layout(self):
        m = model_1()
        th = m.theta()
        # alpha, phi, sigma2, mu, sigma2, P row-major, pi
        assert th.shape == (3 + 2 + 4 + 2,)
        assert th[1] == 0.75
        assert np.array_equal(th[5:9], m.P.ravel())
        th_short = m.theta(include_pi=False)
        assert th_short.shape == (9,)
