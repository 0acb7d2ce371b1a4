"""Truncated-SVD autoencoder probes for hidden layer outputs.

The probe replaces a hidden layer's output Y by its projection onto the
span of the top-m right singular vectors of a previously captured
output matrix.  Encoder (K x m) and decoder (m x K) multiply out to an
orthogonal projector, so probing with m equal to the captured rank
leaves the network's behavior unchanged; smaller m forces the layer's
information through an m-dimensional bottleneck without touching any
trained parameter.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError, StructureError
from .linalg import SvdFactors
from .nn import DenseLayer, Network


@dataclass(frozen=True)
class SvdAutoencoder:
    """Linear bottleneck built from right singular vectors.

    ``encoder`` holds the top-m right singular vectors as columns,
    ``decoder`` is its transpose, and ``encoder @ decoder`` is the
    rank-m orthogonal projector applied after layer ``source_layer``.
    """

    encoder: np.ndarray
    decoder: np.ndarray
    m: int
    source_layer: int

    @property
    def width(self):
        """Width of the layer this probe attaches to."""
        return self.encoder.shape[0]

    def encode(self, y):
        if y.shape[1] != self.encoder.shape[0]:
            raise ShapeError(
                f"captured output has width {y.shape[1]}, probe expects "
                f"{self.encoder.shape[0]}"
            )
        return y @ self.encoder

    def decode(self, code):
        if code.shape[1] != self.decoder.shape[0]:
            raise ShapeError(
                f"code has width {code.shape[1]}, probe expects {self.decoder.shape[0]}"
            )
        return code @ self.decoder

    def project(self, y):
        return self.decode(self.encode(y))


def build_autoencoder(factors, m, layer):
    """Probe at truncation level ``m`` from a layer-output decomposition.

    ``m`` may range over [1, layer width].  When the captured matrix had
    fewer rows than columns the decomposition carries fewer than
    ``width`` directions and the projector's rank saturates there.
    """
    if not isinstance(factors, SvdFactors):
        raise ConfigError(f"expected SvdFactors, got {type(factors).__name__}")
    width = factors.vt.shape[1]
    if not 1 <= m <= width:
        raise ConfigError(
            f"truncation level must be in [1, {width}], got {m}"
        )
    rows = factors.vt[: min(m, factors.factor_count)]
    return SvdAutoencoder(
        encoder=np.ascontiguousarray(rows.T),
        decoder=np.ascontiguousarray(rows),
        m=int(m),
        source_layer=int(layer),
    )


@dataclass(frozen=True)
class ProbedNetwork:
    """A frozen network with an autoencoder spliced in after one layer.

    The base network is never mutated; all evaluation is inference
    mode.
    """

    base: Network
    autoencoder: SvdAutoencoder

    def __post_init__(self):
        self.base.require_hidden_dense(self.autoencoder.source_layer)
        width = self.base.layer_dims()[self.autoencoder.source_layer]
        if width != self.autoencoder.width:
            raise ShapeError(
                f"probe was built for width {self.autoencoder.width}, layer "
                f"{self.autoencoder.source_layer} has width {width}"
            )

    def forward(self, x):
        k = self.autoencoder.source_layer
        h = self.base.capture(x, k)
        return self.base.forward_from(k, self.autoencoder.project(h))

    def forward_from_capture(self, h):
        """Resume from an already captured layer output.

        Lets one capture serve every truncation level evaluated on the
        same rows.
        """
        k = self.autoencoder.source_layer
        return self.base.forward_from(k, self.autoencoder.project(h))


def probed_forward(probed, x):
    """Inference output with the bottleneck in place."""
    return probed.forward(x)


def fold_decoder_linear(probed):
    """Absorb the decoder into the next layer's weights.

    Returns a standalone network in which the probed layer feeds a new
    ``m``-wide linear layer (the encoder) whose output the next layer
    consumes directly through rewritten weights ``decoder @ W``.  The
    rewrite happens on the next layer's linear pre-activation, so it is
    exact for any activation and matches the probed network's output to
    floating-point round-off.
    """
    base = probed.base
    k = probed.autoencoder.source_layer
    if k + 1 >= len(base.layers) or not isinstance(base.layers[k + 1], DenseLayer):
        raise StructureError(
            "decoder folding needs a fully connected layer right after the probe"
        )
    clone = base.copy()
    nxt = clone.layers[k + 1]

    code_width = probed.autoencoder.encoder.shape[1]
    enc_layer = DenseLayer(code_width, "linear")
    enc_layer.w = probed.autoencoder.encoder.copy()
    enc_layer.b = np.zeros(code_width)
    nxt.w = probed.autoencoder.decoder @ nxt.w

    layers = clone.layers[: k + 1] + [enc_layer] + clone.layers[k + 1 :]
    return Network(layers, input_dim=clone.input_dim)
