import numpy as np
import pytest

from dscca.cca.deep import dcca_loss, dcca_loss_grad
from dscca.nn.core import TRAIN, mlp_backward, mlp_forward
from dscca.nn.dsl import (
    CONVENTIONAL,
    DYNAMIC,
    GLOBAL_SCALE,
    HYPERNET,
    SCALE_OUTPUTS,
    VARIANTS,
    WARMUP,
    build_dsl_layer,
    build_dsl_network,
    conditioning_vector,
    dsl_backward,
    dsl_forward,
    dsl_network_backward,
    dsl_network_forward,
    plain_network,
    scaling_factors,
)
from dscca.utils.exception_handler import ShapeError
from helpers import gradient_errors, worst

SCALED_VARIANTS = (DYNAMIC, SCALE_OUTPUTS, HYPERNET)


def make_layer(variant, rng, conditioning="z_only", d_in=3, d_out=2, x_dim=4, scaler_hidden=(5,)):
    layer = build_dsl_layer(
        d_in, d_out, variant, rng, x_dim=x_dim, scaler_hidden=scaler_hidden, conditioning=conditioning
    )
    layer.activate()
    return layer


def perturb(layer, rng):
    """Move a freshly built layer away from its near-identity start."""
    layer.base.b[:] = rng.standard_normal(layer.d_out)
    if layer.scaler is not None:
        final = layer.scaler.net.layers[-1].dense
        final.W[:] = 0.5 * rng.standard_normal(final.W.shape)
    if layer.global_scales is not None:
        layer.global_scales[:] = 1.0 + 0.3 * rng.standard_normal(layer.global_scales.size)


def set_scaler_output(layer, value):
    final = layer.scaler.net.layers[-1].dense
    final.W[:] = 0.0
    final.b[:] = value


class TestConditioningVector:
    def test_modes(self, rng):
        z, x = rng.standard_normal((3, 4)), rng.standard_normal((2, 4))
        assert conditioning_vector("z_only", z, None) is z
        assert conditioning_vector("x_only", z, x) is x
        np.testing.assert_array_equal(conditioning_vector("z_and_x", z, x), np.vstack([z, x]))

    def test_errors(self, rng):
        z = rng.standard_normal((3, 4))
        with pytest.raises(ShapeError):
            conditioning_vector("x_only", z, None)
        with pytest.raises(ShapeError):
            conditioning_vector("z_and_x", z, rng.standard_normal((2, 5)))
        with pytest.raises(ValueError):
            conditioning_vector("y_only", z, None)


class TestForward:
    def test_unit_scales_reproduce_the_conventional_layer(self, rng):
        layer = make_layer(DYNAMIC, rng)
        layer.base.b[:] = rng.standard_normal(2)
        set_scaler_output(layer, 1.0)
        z = rng.standard_normal((3, 6))
        dynamic, _ = dsl_forward(layer, z)
        conventional, _ = dsl_forward(layer, z, mode=WARMUP)
        np.testing.assert_allclose(dynamic, conventional, rtol=0, atol=1e-12)

    def test_zero_scales_give_zero_output(self, rng):
        layer = make_layer(DYNAMIC, rng)
        layer.base.b[:] = rng.standard_normal(2)
        set_scaler_output(layer, 0.0)
        Y, _ = dsl_forward(layer, rng.standard_normal((3, 6)))
        assert np.all(Y == 0)

    def test_fresh_scaler_starts_near_identity(self, rng):
        layer = make_layer(DYNAMIC, rng, scaler_hidden=(16,))
        z = rng.standard_normal((3, 50))
        dynamic, _ = dsl_forward(layer, z)
        conventional, _ = dsl_forward(layer, z, mode=WARMUP)
        assert np.max(np.abs(dynamic - conventional)) < 0.25 * np.max(np.abs(conventional))

    @pytest.mark.parametrize("variant", SCALED_VARIANTS)
    def test_matches_per_sample_formula(self, variant, rng):
        layer = make_layer(variant, rng)
        perturb(layer, rng)
        z = rng.standard_normal((3, 2))
        Y, tape = dsl_forward(layer, z)
        W, b, S = layer.base.W, layer.base.b, tape.scales
        for i in range(2):
            if variant == SCALE_OUTPUTS:
                expected = S[:, i] * (W.T @ z[:, i] + b)
            else:
                S_W, S_b = S[:6, i].reshape(3, 2), S[6:, i]
                if variant == HYPERNET:
                    expected = S_W.T @ z[:, i] + S_b
                else:
                    expected = (S_W * W).T @ z[:, i] + S_b * b
            np.testing.assert_allclose(Y[:, i], expected, rtol=1e-12, atol=1e-12)

    def test_global_scales_match_dynamic_with_constant_scaler(self, rng):
        static = make_layer(GLOBAL_SCALE, rng)
        perturb(static, rng)
        dynamic = make_layer(DYNAMIC, rng)
        dynamic.base.W[:] = static.base.W
        dynamic.base.b[:] = static.base.b
        set_scaler_output(dynamic, static.global_scales)
        z = rng.standard_normal((3, 5))
        np.testing.assert_allclose(dsl_forward(static, z)[0], dsl_forward(dynamic, z)[0], rtol=0, atol=1e-12)

    def test_wrong_input_rows(self, rng):
        with pytest.raises(ShapeError):
            dsl_forward(make_layer(DYNAMIC, rng), rng.standard_normal((4, 5)))

    def test_unknown_variant(self, rng):
        with pytest.raises(ValueError):
            build_dsl_layer(3, 2, "quadratic", rng)


class TestBackward:
    def test_warmup_leaves_scaler_without_gradient(self, rng):
        layer = build_dsl_layer(3, 2, DYNAMIC, rng, scaler_hidden=(5,))
        z = rng.standard_normal((3, 6))
        _, tape = dsl_forward(layer, z)
        grads, _, _ = dsl_backward(layer, tape, rng.standard_normal((2, 6)))
        scaler = [name for name in grads if ".scaler." in name]
        assert scaler
        assert all(np.all(grads[name] == 0) for name in scaler)
        assert np.any(grads["head.base.W"] != 0)

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_zero_upstream_gradient(self, variant, rng):
        layer = make_layer(variant, rng)
        _, tape = dsl_forward(layer, rng.standard_normal((3, 6)))
        grads, dZ, _ = dsl_backward(layer, tape, np.zeros((2, 6)))
        assert all(np.all(g == 0) for g in grads.values())
        assert np.all(dZ == 0)

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_variants_match_finite_differences(self, variant):
        self.check_layer(variant, "z_only", seed=11)

    @pytest.mark.parametrize("conditioning", ["z_only", "x_only", "z_and_x"])
    @pytest.mark.parametrize("variant", SCALED_VARIANTS)
    def test_conditioning_modes_match_finite_differences(self, variant, conditioning):
        self.check_layer(variant, conditioning, seed=5)

    @staticmethod
    def check_layer(variant, conditioning, seed):
        rng = np.random.default_rng(seed)
        layer = make_layer(variant, rng, conditioning)
        perturb(layer, rng)
        z, x = rng.standard_normal((3, 4)), rng.standard_normal((4, 4))
        G = rng.standard_normal((2, 4))

        def loss():
            Y, _ = dsl_forward(layer, z, x, update_stats=False)
            return float(np.sum(Y * G))

        _, tape = dsl_forward(layer, z, x, update_stats=False)
        grads, dZ, dX = dsl_backward(layer, tape, G)
        assert set(grads) == set(layer.parameters())
        assert worst(gradient_errors(loss, layer.parameters(), grads)) <= 1e-4
        assert worst(gradient_errors(loss, {"z": z}, {"z": dZ})) <= 1e-4
        if conditioning == "z_only":
            assert dX is None
        else:
            assert worst(gradient_errors(loss, {"x": x}, {"x": dX})) <= 1e-4

    @pytest.mark.parametrize("seed", range(5))
    def test_end_to_end_dcca_gradient(self, seed):
        rng = np.random.default_rng(seed)
        nets = []
        for view in (1, 2):
            net = build_dsl_network(6, [5], 3, DYNAMIC, seed=seed, view=view, scaler_hidden=(6,))
            net.head.activate()
            perturb(net.head, rng)
            nets.append(net)
        X1, X2 = rng.standard_normal((6, 16)), rng.standard_normal((6, 16))
        X2[:3] += X1[:3]

        def loss():
            F1, _ = dsl_network_forward(nets[0], X1, TRAIN, update_stats=False)
            F2, _ = dsl_network_forward(nets[1], X2, TRAIN, update_stats=False)
            return dcca_loss(F1, F2, 1e-3, 1e-3, 3)[0]

        F1, tape1 = dsl_network_forward(nets[0], X1, TRAIN, update_stats=False)
        F2, tape2 = dsl_network_forward(nets[1], X2, TRAIN, update_stats=False)
        dF1, dF2 = dcca_loss_grad(dcca_loss(F1, F2, 1e-3, 1e-3, 3)[1])
        grads1, _ = dsl_network_backward(nets[0], tape1, dF1)
        grads2, _ = dsl_network_backward(nets[1], tape2, dF2)
        assert worst(gradient_errors(loss, nets[0].parameters(), grads1)) <= 1e-3
        assert worst(gradient_errors(loss, nets[1].parameters(), grads2)) <= 1e-3


class TestHeadState:
    def test_hypernet_takes_over_conventional_parameters(self, rng):
        layer = build_dsl_layer(3, 2, HYPERNET, rng, scaler_hidden=(5,))
        layer.base.W += 1.0
        layer.base.b[:] = [0.5, -0.5]
        layer.activate()
        final = layer.scaler.net.layers[-1].dense
        np.testing.assert_array_equal(final.b, np.concatenate([layer.base.W.reshape(-1), layer.base.b]))
        assert layer.mode == HYPERNET

        final.W[:] = 0.0
        z = rng.standard_normal((3, 5))
        np.testing.assert_allclose(dsl_forward(layer, z)[0], dsl_forward(layer, z, mode=WARMUP)[0], atol=1e-12)

        layer.base.W += 1.0
        layer.activate()
        assert not np.array_equal(final.b[:6], layer.base.W.reshape(-1))

    def test_conventional_layer_stays_in_warmup(self, rng):
        layer = build_dsl_layer(3, 2, CONVENTIONAL, rng)
        layer.activate()
        assert layer.mode == WARMUP
        assert layer.scaler is None

    def test_scaled_count(self, rng):
        layer = build_dsl_layer(4, 3, DYNAMIC, rng, scaler_hidden=(5,))
        assert layer.scaled_count == 15
        assert layer.scaler.output_dim == 15
        assert build_dsl_layer(4, 3, SCALE_OUTPUTS, rng, scaler_hidden=(5,)).scaler.output_dim == 3
        assert build_dsl_layer(4, 3, GLOBAL_SCALE, rng).global_scales.tolist() == [1.0] * 15

    def test_trainable_parameters_follow_mode(self, rng):
        layer = build_dsl_layer(3, 2, DYNAMIC, rng, scaler_hidden=(5,))
        base = {"head.base.W", "head.base.b"}
        scaler = {name for name in layer.parameters() if ".scaler." in name}
        assert set(layer.trainable_parameters()) == base
        assert set(layer.trainable_parameters(DYNAMIC)) == base | scaler
        assert set(layer.trainable_parameters(HYPERNET)) == scaler
        static = build_dsl_layer(3, 2, GLOBAL_SCALE, rng)
        assert set(static.trainable_parameters(GLOBAL_SCALE)) == base | {"head.global_scales"}


class TestNetwork:
    def test_warmup_network_is_the_plain_mlp(self, rng):
        source = build_dsl_network(6, [5, 4], 3, DYNAMIC, seed=2, scaler_hidden=(6,))
        dsl_net, plain = source.copy(), plain_network(source.copy())
        for _ in range(3):
            X = rng.standard_normal((6, 10))
            F_dsl, tape_dsl = dsl_network_forward(dsl_net, X)
            F_plain, tape_plain = mlp_forward(plain, X)
            np.testing.assert_array_equal(F_dsl, F_plain)
            dF = rng.standard_normal(F_dsl.shape)
            grads_dsl, dX_dsl = dsl_network_backward(dsl_net, tape_dsl, dF)
            grads_plain, dX_plain = mlp_backward(plain, tape_plain, dF)
            np.testing.assert_array_equal(grads_dsl["head.base.W"], grads_plain["2.W"])
            np.testing.assert_array_equal(grads_dsl["backbone.0.W"], grads_plain["0.W"])
            np.testing.assert_array_equal(dX_dsl, dX_plain)
        np.testing.assert_array_equal(dsl_net.feature_bn.running_var, plain.layers[-1].batch_norm.running_var)

    def test_variants_share_conventional_parameters(self):
        a = build_dsl_network(6, [5], 3, DYNAMIC, seed=4, scaler_hidden=(6,))
        b = build_dsl_network(6, [5], 3, CONVENTIONAL, seed=4)
        for name, value in b.parameters().items():
            np.testing.assert_array_equal(value, a.parameters()[name])

    def test_views_use_different_streams(self):
        a = build_dsl_network(6, [5], 3, DYNAMIC, seed=4, view=1)
        b = build_dsl_network(6, [5], 3, DYNAMIC, seed=4, view=2)
        assert not np.array_equal(a.parameters()["backbone.0.W"], b.parameters()["backbone.0.W"])

    def test_scaling_factors_shape(self, rng):
        net = build_dsl_network(6, [5], 3, DYNAMIC, seed=0, scaler_hidden=(6,))
        dsl_network_forward(net, rng.standard_normal((6, 20)))
        assert scaling_factors(net, rng.standard_normal((6, 7))).shape == (18, 7)
        with pytest.raises(ShapeError):
            scaling_factors(build_dsl_network(6, [5], 3, CONVENTIONAL), rng.standard_normal((6, 2)))

    def test_parameter_counts(self):
        net = build_dsl_network(6, [5], 3, DYNAMIC, scaler_hidden=(6,))
        assert net.parameter_count(include_scaler=False) == 6 * 5 + 5 + 5 * 3 + 3
        assert net.scaler_parameter_count() == 5 * 6 + 6 + 6 * 18 + 18
