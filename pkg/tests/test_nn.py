import io

import numpy as np
import pytest

from widthprobe import (
    BatchNormLayer,
    DenseLayer,
    FlattenLayer,
    LayerError,
    Network,
    ShapeError,
    cross_entropy,
    loss_and_grads,
)

from conftest import fd_gradient, forward_scalar_oracle, random_network, rel_error


def small_net(seed=0):
    net = Network(
        [
            FlattenLayer(),
            BatchNormLayer(),
            DenseLayer(5, "abs"),
            DenseLayer(4, "relu"),
            DenseLayer(3, "softmax"),
        ]
    )
    net.initialize(6, seed=seed)
    return net


class TestDense:
    def test_zero_weights_give_bias(self):
        layer = DenseLayer(3, "linear")
        layer.build(2, np.random.default_rng(0))
        layer.w[...] = 0.0
        layer.b[...] = [1.0, -2.0, 0.5]
        out = layer.forward(np.zeros((4, 2)))
        assert np.array_equal(out, np.tile([1.0, -2.0, 0.5], (4, 1)))

    def test_abs_activation_hand_case(self):
        layer = DenseLayer(1, "abs")
        layer.build(1, np.random.default_rng(0))
        layer.w[...] = [[-1.0]]
        layer.b[...] = 0.0
        assert np.array_equal(layer.forward(np.array([[2.0]])), [[2.0]])
        assert np.array_equal(layer.forward(np.array([[-3.0]])), [[3.0]])

    def test_relu_clips_negatives(self, rng):
        layer = DenseLayer(4, "relu")
        layer.build(3, rng)
        out = layer.forward(rng.normal(size=(20, 3)))
        assert np.all(out >= 0)

    def test_unknown_activation_rejected(self):
        with pytest.raises(Exception):
            DenseLayer(3, "tanh")

    def test_glorot_bound(self):
        layer = DenseLayer(50, "linear")
        layer.build(30, np.random.default_rng(1))
        bound = np.sqrt(6.0 / (30 + 50))
        assert np.max(np.abs(layer.w)) <= bound
        assert np.array_equal(layer.b, np.zeros(50))


class TestSoftmax:
    def test_rows_sum_to_one(self, rng):
        net = Network([DenseLayer(7, "softmax")])
        net.initialize(4, seed=3)
        out = net.forward(rng.normal(size=(50, 4)))
        assert np.max(np.abs(out.sum(axis=1) - 1.0)) < 1e-9
        assert np.all(out >= 0) and np.all(out <= 1)

    def test_shift_invariance(self):
        net = Network([DenseLayer(3, "softmax")])
        net.initialize(3, seed=0)
        net.layers[0].w[...] = np.eye(3)
        net.layers[0].b[...] = 0.0
        a = net.forward(np.array([[1.0, 2.0, 3.0]]))
        b = net.forward(np.array([[1001.0, 1002.0, 1003.0]]))
        assert np.max(np.abs(a - b)) < 1e-12

    def test_only_final_layer_may_use_softmax(self):
        with pytest.raises(Exception):
            Network([DenseLayer(3, "softmax"), DenseLayer(2, "linear")]).initialize(
                4, seed=0
            )


class TestBatchNorm:
    def test_inference_is_affine(self, rng):
        """BN in inference mode must be an affine map per feature."""
        net = Network([BatchNormLayer(), DenseLayer(3, "linear")])
        net.initialize(5, seed=2)
        # push the running stats away from the init values
        net.forward(rng.normal(2.0, 3.0, size=(64, 5)), training=True)
        x1 = rng.normal(size=(1, 5))
        x2 = rng.normal(size=(1, 5))
        alpha = 0.37
        bn = net.layers[0]
        mixed = bn.forward(alpha * x1 + (1 - alpha) * x2)
        combo = alpha * bn.forward(x1) + (1 - alpha) * bn.forward(x2)
        assert np.max(np.abs(mixed - combo)) < 1e-9

    def test_training_normalizes_batch(self, rng):
        bn = BatchNormLayer()
        bn.build(4, rng)
        x = rng.normal(5.0, 2.0, size=(256, 4))
        out = bn.forward(x, training=True)
        assert np.max(np.abs(out.mean(axis=0))) < 1e-9
        # biased variance, epsilon in the denominator
        var = ((x - x.mean(axis=0)) ** 2).mean(axis=0)
        expected = (x - x.mean(axis=0)) / np.sqrt(var + bn.epsilon)
        assert np.max(np.abs(out - expected)) < 1e-9

    def test_running_stat_update_rule(self, rng):
        bn = BatchNormLayer()
        bn.build(3, rng)
        x = rng.normal(1.0, 2.0, size=(32, 3))
        mean0 = bn.running_mean.copy()
        var0 = bn.running_var.copy()
        bn.forward(x, training=True)
        batch_mean = x.mean(axis=0)
        batch_var = ((x - batch_mean) ** 2).mean(axis=0)
        m = bn.momentum
        assert np.allclose(bn.running_mean, m * mean0 + (1 - m) * batch_mean, atol=1e-12)
        assert np.allclose(bn.running_var, m * var0 + (1 - m) * batch_var, atol=1e-12)

    def test_defaults(self):
        bn = BatchNormLayer()
        assert bn.epsilon == 1e-3
        assert bn.momentum == 0.99


class TestForward:
    def test_matches_scalar_oracle(self, rng):
        net = small_net(seed=7)
        net.forward(rng.normal(1.0, 2.0, size=(32, 6)), training=True)
        x = rng.normal(size=(9, 6))
        got = net.forward(x)
        want = forward_scalar_oracle(net, x)
        assert rel_error(got, want) < 1e-10

    def test_input_width_checked(self):
        net = small_net()
        with pytest.raises(ShapeError):
            net.forward(np.zeros((2, 7)))

    def test_layer_dims(self):
        net = small_net()
        assert net.output_dim == 3
        assert net.layer_dims() == [6, 6, 5, 4, 3]

    def test_capture_matches_manual_split(self, rng):
        net = small_net(seed=1)
        x = rng.normal(size=(11, 6))
        idx = net.hidden_dense_indices()[0]
        h = net.capture(x, idx)
        full = net.forward(x)
        resumed = net.forward_from(idx, h)
        assert np.max(np.abs(resumed - full)) < 1e-12

    def test_capture_is_post_activation(self, rng):
        net = small_net(seed=4)
        idx = net.hidden_dense_indices()[0]  # abs activation
        h = net.capture(rng.normal(size=(8, 6)), idx)
        assert np.all(h >= 0)

    def test_capture_rejects_non_dense(self, rng):
        net = small_net()
        x = rng.normal(size=(3, 6))
        with pytest.raises(LayerError):
            net.capture(x, 0)  # flatten
        with pytest.raises(LayerError):
            net.capture(x, 1)  # batchnorm
        with pytest.raises(LayerError):
            net.capture(x, len(net.layers) - 1)  # output layer
        with pytest.raises(LayerError):
            net.capture(x, 99)

    def test_hidden_dense_indices(self):
        net = small_net()
        assert net.hidden_dense_indices() == [2, 3]
        assert net.dense_indices() == [2, 3, 4]


class TestBackward:
    @pytest.mark.parametrize("loss_name", ["cross_entropy", "mse"])
    def test_gradients_match_finite_differences(self, rng, loss_name):
        net = random_network(
            rng, 4, [5, 3], ["abs", "softmax" if loss_name == "cross_entropy" else "linear"]
        )
        x = rng.normal(size=(12, 4))
        if loss_name == "cross_entropy":
            y = np.eye(3)[rng.integers(0, 3, size=12)]
        else:
            y = rng.normal(size=(12, 3))
        _, grads = loss_and_grads(net, x, y, loss_name)
        numeric = fd_gradient(net, x, y, loss_name)
        for g, n in zip(grads, numeric):
            assert rel_error(g, n) < 1e-5

    def test_batchnorm_gradients(self, rng):
        net = Network([BatchNormLayer(), DenseLayer(2, "linear")])
        net.initialize(3, seed=5)
        for p in net.parameters():
            p[...] = rng.normal(0.0, 0.5, size=p.shape)
        net.layers[0].running_var[...] = np.abs(net.layers[0].running_var) + 0.5
        x = rng.normal(size=(16, 3))
        y = rng.normal(size=(16, 2))
        _, grads = loss_and_grads(net, x, y, "mse")
        numeric = fd_gradient(net, x, y, "mse")
        for g, n in zip(grads, numeric):
            assert rel_error(g, n) < 1e-5


class TestStateAndSerialization:
    def test_get_set_state_round_trip(self, rng):
        net = small_net(seed=9)
        state = net.get_state()
        x = rng.normal(size=(5, 6))
        before = net.forward(x)
        for p in net.parameters():
            p[...] += 1.0
        assert not np.allclose(net.forward(x), before)
        net.set_state(state)
        assert np.array_equal(net.forward(x), before)

    def test_set_state_preserves_array_identity(self):
        """Restoring weights must write through existing views."""
        net = small_net()
        views = net.parameters()
        net.set_state(net.get_state())
        assert all(v is w for v, w in zip(views, net.parameters()))

    def test_save_load_round_trip(self, tmp_path, rng):
        net = small_net(seed=11)
        net.forward(rng.normal(size=(20, 6)), training=True)  # move BN stats
        path = tmp_path / "net.npz"
        net.save(path)
        loaded = Network.load(path)
        x = rng.normal(size=(7, 6))
        assert np.array_equal(loaded.forward(x), net.forward(x))
        assert loaded.checksum() == net.checksum()

    def test_bytes_round_trip(self, rng):
        net = small_net(seed=3)
        blob = net.to_bytes()
        loaded = Network.from_bytes(blob)
        x = rng.normal(size=(4, 6))
        assert np.array_equal(loaded.forward(x), net.forward(x))

    def test_checksum_changes_with_weights(self):
        net = small_net(seed=2)
        before = net.checksum()
        net.parameters()[0][0] += 1e-3
        assert net.checksum() != before

    def test_copy_is_independent(self, rng):
        net = small_net(seed=6)
        dup = net.copy()
        x = rng.normal(size=(3, 6))
        assert np.array_equal(dup.forward(x), net.forward(x))
        dup.parameters()[0][...] += 1.0
        assert np.array_equal(net.forward(x), small_net(seed=6).forward(x))

    def test_spec_copy_is_unbuilt(self):
        net = small_net(seed=8)
        fresh = net.spec_copy()
        fresh.initialize(6, seed=8)
        x = np.ones((2, 6))
        assert np.array_equal(fresh.forward(x), small_net(seed=8).forward(x))

    def test_initialize_deterministic(self):
        a = small_net(seed=42)
        b = small_net(seed=42)
        c = small_net(seed=43)
        x = np.linspace(-1, 1, 12).reshape(2, 6)
        assert np.array_equal(a.forward(x), b.forward(x))
        assert not np.array_equal(a.forward(x), c.forward(x))

    def test_architecture_schema(self):
        arch = small_net().architecture()
        assert arch["schema"] == "widthprobe-network/1"
        assert arch["input_dim"] == 6
        assert len(arch["layers"]) == 5


class TestLossSanity:
    def test_cross_entropy_perfect_prediction(self):
        t = np.eye(3)
        assert cross_entropy(t, t) < 1e-11
