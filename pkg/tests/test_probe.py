import numpy as np
import pytest

from widthprobe import (
    ConfigError,
    DenseLayer,
    LayerError,
    Network,
    ProbedNetwork,
    ShapeError,
    StructureError,
    BatchNormLayer,
    build_autoencoder,
    fold_decoder_linear,
    frobenius,
    probed_forward,
    thin_svd,
)

from conftest import planted_rank_matrix


def hidden_net(input_dim=6, width=10, out=3, activation="abs", seed=0):
    net = Network([DenseLayer(width, activation), DenseLayer(out, "softmax")])
    net.initialize(input_dim, seed=seed)
    return net


def captured_factors(net, x, layer=0):
    return thin_svd(net.capture(x, layer))


class TestBuildAutoencoder:
    def test_full_width_projector_is_identity(self, rng):
        y = rng.normal(size=(40, 8))
        ae = build_autoencoder(thin_svd(y), m=8, layer=0)
        p = ae.encoder @ ae.decoder
        assert np.max(np.abs(p - np.eye(8))) < 1e-9

    def test_projector_symmetric_idempotent(self, rng):
        y = rng.normal(size=(30, 9))
        for m in (1, 4, 9):
            ae = build_autoencoder(thin_svd(y), m=m, layer=0)
            p = ae.encoder @ ae.decoder
            assert np.max(np.abs(p - p.T)) < 1e-9
            assert np.max(np.abs(p @ p - p)) < 1e-9

    def test_decoder_encoder_is_identity_m(self, rng):
        y = rng.normal(size=(30, 7))
        for m in (1, 3, 7):
            ae = build_autoencoder(thin_svd(y), m=m, layer=0)
            assert np.max(np.abs(ae.decoder @ ae.encoder - np.eye(m))) < 1e-9

    def test_rank_one_matrix_m1_exact(self, rng):
        y = planted_rank_matrix(rng, 25, 6, 1)
        ae = build_autoencoder(thin_svd(y), m=1, layer=0)
        reconstructed = y @ ae.encoder @ ae.decoder
        scale = frobenius(y)
        assert frobenius(reconstructed - y) < 1e-8 * scale

    def test_truncation_error_matches_tail_energy(self, rng):
        y = rng.normal(size=(50, 12))
        factors = thin_svd(y)
        total = frobenius(y) ** 2
        for m in range(1, 12):
            ae = build_autoencoder(factors, m=m, layer=0)
            resid = frobenius(y - y @ ae.encoder @ ae.decoder) ** 2
            assert abs(resid - factors.tail_energy(m)) < 1e-6 * total

    def test_residual_monotone_in_m(self, rng):
        y = rng.normal(size=(40, 10))
        factors = thin_svd(y)
        resids = []
        for m in range(1, 11):
            ae = build_autoencoder(factors, m=m, layer=0)
            resids.append(frobenius(y - y @ ae.encoder @ ae.decoder))
        assert all(a >= b - 1e-12 for a, b in zip(resids, resids[1:]))

    def test_m_out_of_range(self, rng):
        factors = thin_svd(rng.normal(size=(10, 5)))
        with pytest.raises(ConfigError):
            build_autoencoder(factors, m=0, layer=0)
        with pytest.raises(ConfigError):
            build_autoencoder(factors, m=6, layer=0)

    def test_shapes(self, rng):
        ae = build_autoencoder(thin_svd(rng.normal(size=(20, 8))), m=3, layer=2)
        assert ae.encoder.shape == (8, 3)
        assert ae.decoder.shape == (3, 8)
        assert ae.m == 3
        assert ae.width == 8
        assert ae.source_layer == 2

    def test_encode_decode_project(self, rng):
        y = rng.normal(size=(15, 6))
        ae = build_autoencoder(thin_svd(y), m=2, layer=0)
        codes = ae.encode(y)
        assert codes.shape == (15, 2)
        back = ae.decode(codes)
        assert np.max(np.abs(back - ae.project(y))) < 1e-12
        with pytest.raises(ShapeError):
            ae.encode(rng.normal(size=(3, 5)))


class TestProbedForward:
    def test_full_m_equals_base(self, rng):
        net = hidden_net(width=7, seed=1)
        x = rng.normal(size=(30, 6))
        ae = build_autoencoder(captured_factors(net, x), m=7, layer=0)
        probed = ProbedNetwork(net, ae)
        base = net.forward(x)
        assert np.max(np.abs(probed.forward(x) - base)) < 1e-6
        assert np.max(np.abs(probed_forward(probed, x) - base)) < 1e-6

    def test_planted_rank_cutoff(self, rng):
        """m = r preserves outputs exactly; m = r - 1 visibly does not."""
        r = 3
        width = 12
        net = Network([DenseLayer(width, "linear"), DenseLayer(4, "softmax")])
        net.initialize(5, seed=2)
        net.layers[0].w[...] = planted_rank_matrix(rng, 5, width, r)
        net.layers[0].b[...] = 0.0
        x = rng.normal(size=(60, 5))
        factors = captured_factors(net, x)
        base = net.forward(x)

        keep = ProbedNetwork(net, build_autoencoder(factors, m=r, layer=0))
        assert np.max(np.abs(keep.forward(x) - base)) < 1e-6

        drop = ProbedNetwork(net, build_autoencoder(factors, m=r - 1, layer=0))
        assert np.max(np.abs(drop.forward(x) - base)) > 1e-3

    def test_base_not_mutated(self, rng):
        net = hidden_net(width=6, seed=3)
        x = rng.normal(size=(20, 6))
        before = net.checksum()
        probed = ProbedNetwork(net, build_autoencoder(captured_factors(net, x), 2, 0))
        probed.forward(x)
        assert net.checksum() == before

    def test_width_mismatch_rejected(self, rng):
        net = hidden_net(width=6, seed=0)
        wrong = build_autoencoder(thin_svd(rng.normal(size=(10, 5))), m=2, layer=0)
        with pytest.raises(ShapeError):
            ProbedNetwork(net, wrong)

    def test_source_layer_must_be_hidden_dense(self, rng):
        net = hidden_net(width=6, seed=0)
        x = rng.normal(size=(10, 6))
        factors = captured_factors(net, x)
        on_output = build_autoencoder(factors, m=2, layer=1)
        with pytest.raises(LayerError):
            ProbedNetwork(net, on_output)

    def test_forward_from_capture(self, rng):
        net = hidden_net(width=5, seed=4)
        x = rng.normal(size=(12, 6))
        probed = ProbedNetwork(net, build_autoencoder(captured_factors(net, x), 3, 0))
        h = net.capture(x, 0)
        assert np.array_equal(probed.forward_from_capture(h), probed.forward(x))


class TestFoldDecoderLinear:
    def probed(self, rng, m, width=9, activation="abs", seed=5):
        net = hidden_net(width=width, activation=activation, seed=seed)
        x = rng.normal(size=(40, 6))
        ae = build_autoencoder(captured_factors(net, x), m=m, layer=0)
        return ProbedNetwork(net, ae), x

    def test_matches_probed_forward(self, rng):
        probed, x = self.probed(rng, m=4)
        folded = fold_decoder_linear(probed)
        got = folded.forward(x)
        want = probed.forward(x)
        assert np.max(np.abs(got - want)) < 1e-9

    def test_full_m_equals_base(self, rng):
        probed, x = self.probed(rng, m=9)
        folded = fold_decoder_linear(probed)
        assert np.max(np.abs(folded.forward(x) - probed.base.forward(x))) < 1e-9

    def test_single_sample(self, rng):
        probed, x = self.probed(rng, m=3)
        folded = fold_decoder_linear(probed)
        one = x[:1]
        assert np.max(np.abs(folded.forward(one) - probed.forward(one))) < 1e-9

    def test_bottleneck_width_visible(self, rng):
        probed, _ = self.probed(rng, m=4)
        folded = fold_decoder_linear(probed)
        # the encoder becomes its own linear layer of width m
        dims = folded.layer_dims()
        assert 4 in dims

    def test_base_unchanged(self, rng):
        probed, x = self.probed(rng, m=2)
        before = probed.base.checksum()
        fold_decoder_linear(probed)
        assert probed.base.checksum() == before

    def test_next_layer_must_be_dense(self, rng):
        net = Network(
            [DenseLayer(6, "abs"), BatchNormLayer(), DenseLayer(2, "softmax")]
        )
        net.initialize(4, seed=0)
        x = rng.normal(size=(20, 4))
        ae = build_autoencoder(thin_svd(net.capture(x, 0)), m=2, layer=0)
        probed = ProbedNetwork(net, ae)
        with pytest.raises(StructureError):
            fold_decoder_linear(probed)

    def test_works_for_deeper_layer(self, rng):
        net = Network(
            [DenseLayer(8, "relu"), DenseLayer(7, "abs"), DenseLayer(2, "softmax")]
        )
        net.initialize(5, seed=6)
        x = rng.normal(size=(30, 5))
        ae = build_autoencoder(thin_svd(net.capture(x, 1)), m=3, layer=1)
        probed = ProbedNetwork(net, ae)
        folded = fold_decoder_linear(probed)
        assert np.max(np.abs(folded.forward(x) - probed.forward(x))) < 1e-9
