"""Minimal dense feed-forward networks on numpy.

Layers run in forward order (input side first).  Forward passes are
pure: inference never mutates layer state, so a trained network can be
shared across threads.  Training-mode passes return an explicit tape
that ``backward`` consumes, and only batch-norm running statistics are
updated in place during training.

All arithmetic is float64.  Inference mode is the reference semantics
for every evaluation in this package; training mode exists only for the
optimizer.
"""

import hashlib
import io
import json

import numpy as np

from .errors import LayerError, NumericError, ShapeError, StructureError

ACTIVATIONS = ("linear", "relu", "abs", "softmax")

BN_EPSILON = 1e-3
BN_MOMENTUM = 0.99


def _activate(name, z):
    if name == "linear":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "abs":
        return np.abs(z)
    if name == "softmax":
        shifted = z - np.max(z, axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / np.sum(e, axis=1, keepdims=True)
    raise StructureError(f"unknown activation {name!r}")


def _activation_backward(name, grad_out, z, out):
    """Gradient through the activation: d loss / d z given d loss / d out."""
    if name == "linear":
        return grad_out
    if name == "relu":
        return grad_out * (z > 0.0)
    if name == "abs":
        return grad_out * np.sign(z)
    if name == "softmax":
        # Full Jacobian-vector product; works for any loss, not just
        # cross-entropy with its usual shortcut.
        dot = np.sum(grad_out * out, axis=1, keepdims=True)
        return out * (grad_out - dot)
    raise StructureError(f"unknown activation {name!r}")


class DenseLayer:
    """Fully connected layer: ``act(x @ w + b)``."""

    kind = "dense"

    def __init__(self, units, activation="linear"):
        if units < 1:
            raise StructureError(f"dense layer needs at least 1 unit, got {units}")
        if activation not in ACTIVATIONS:
            raise StructureError(f"unknown activation {activation!r}")
        self.units = int(units)
        self.activation = activation
        self.w = None
        self.b = None

    def build(self, in_dim, rng):
        limit = np.sqrt(6.0 / (in_dim + self.units))
        self.w = rng.uniform(-limit, limit, size=(in_dim, self.units))
        self.b = np.zeros(self.units)
        return self.units

    def out_dim(self, in_dim):
        return self.units

    def forward(self, x, training=False):
        z = x @ self.w + self.b
        return _activate(self.activation, z)

    def forward_tape(self, x):
        z = x @ self.w + self.b
        out = _activate(self.activation, z)
        return out, (x, z, out)

    def backward(self, grad_out, tape):
        x, z, out = tape
        dz = _activation_backward(self.activation, grad_out, z, out)
        grads = [x.T @ dz, np.sum(dz, axis=0)]
        return dz @ self.w.T, grads

    def params(self):
        return [self.w, self.b]

    def config(self):
        return {"kind": self.kind, "units": self.units, "activation": self.activation}


class BatchNormLayer:
    """Per-feature batch normalization with running statistics.

    Training mode normalizes by the batch mean and biased batch variance
    and blends them into the running values; inference mode uses the
    running values only.
    """

    kind = "batchnorm"

    def __init__(self, epsilon=BN_EPSILON, momentum=BN_MOMENTUM):
        self.epsilon = float(epsilon)
        self.momentum = float(momentum)
        self.gamma = None
        self.beta = None
        self.running_mean = None
        self.running_var = None

    def build(self, in_dim, rng):
        self.gamma = np.ones(in_dim)
        self.beta = np.zeros(in_dim)
        self.running_mean = np.zeros(in_dim)
        self.running_var = np.ones(in_dim)
        return in_dim

    def out_dim(self, in_dim):
        return in_dim

    def forward(self, x, training=False):
        if training:
            out, _ = self.forward_tape(x)
            return out
        xhat = (x - self.running_mean) / np.sqrt(self.running_var + self.epsilon)
        return self.gamma * xhat + self.beta

    def forward_tape(self, x):
        mean = np.mean(x, axis=0)
        var = np.var(x, axis=0)
        m = self.momentum
        self.running_mean = m * self.running_mean + (1.0 - m) * mean
        self.running_var = m * self.running_var + (1.0 - m) * var
        inv_std = 1.0 / np.sqrt(var + self.epsilon)
        xc = x - mean
        xhat = xc * inv_std
        out = self.gamma * xhat + self.beta
        return out, (xc, inv_std, xhat)

    def backward(self, grad_out, tape):
        xc, inv_std, xhat = tape
        n = xc.shape[0]
        dgamma = np.sum(grad_out * xhat, axis=0)
        dbeta = np.sum(grad_out, axis=0)
        dxhat = grad_out * self.gamma
        dvar = np.sum(dxhat * xc, axis=0) * -0.5 * inv_std**3
        dmean = -np.sum(dxhat, axis=0) * inv_std - 2.0 * dvar * np.mean(xc, axis=0)
        dx = dxhat * inv_std + (2.0 / n) * dvar * xc + dmean / n
        return dx, [dgamma, dbeta]

    def params(self):
        return [self.gamma, self.beta]

    def config(self):
        return {"kind": self.kind, "epsilon": self.epsilon, "momentum": self.momentum}


class FlattenLayer:
    """Collapse trailing axes; a no-op on already-flat rows."""

    kind = "flatten"

    def build(self, in_dim, rng):
        return in_dim

    def out_dim(self, in_dim):
        return in_dim

    def forward(self, x, training=False):
        if x.ndim == 2:
            return x
        return x.reshape(x.shape[0], -1)

    def forward_tape(self, x):
        return self.forward(x), None

    def backward(self, grad_out, tape):
        return grad_out, []

    def params(self):
        return []

    def config(self):
        return {"kind": self.kind}


_LAYER_KINDS = {
    "dense": lambda cfg: DenseLayer(cfg["units"], cfg["activation"]),
    "batchnorm": lambda cfg: BatchNormLayer(cfg["epsilon"], cfg["momentum"]),
    "flatten": lambda cfg: FlattenLayer(),
}

_STATE_NAMES = {
    "dense": ("w", "b"),
    "batchnorm": ("gamma", "beta", "running_mean", "running_var"),
    "flatten": (),
}


class Network:
    """A sequence of layers plus the bookkeeping the rest of the package needs."""

    def __init__(self, layers, input_dim=None):
        if not layers:
            raise StructureError("a network needs at least one layer")
        self.layers = list(layers)
        dense = [l for l in self.layers if isinstance(l, DenseLayer)]
        for layer in dense[:-1]:
            if layer.activation == "softmax":
                raise StructureError(
                    "softmax is only allowed on the final dense layer"
                )
        self.input_dim = None
        if input_dim is not None:
            self.input_dim = int(input_dim)

    # -- construction -------------------------------------------------

    def initialize(self, input_dim, seed):
        """Allocate parameters for the given input width.

        The seed fixes every random draw, so two calls with equal seeds
        produce identical parameters.
        """
        rng = np.random.default_rng(seed)
        self.input_dim = int(input_dim)
        dim = self.input_dim
        for layer in self.layers:
            dim = layer.build(dim, rng)
        return self

    @property
    def output_dim(self):
        self._require_built()
        dim = self.input_dim
        for layer in self.layers:
            dim = layer.out_dim(dim)
        return dim

    def layer_dims(self):
        """Output width of every layer, in forward order."""
        self._require_built()
        dims = []
        dim = self.input_dim
        for layer in self.layers:
            dim = layer.out_dim(dim)
            dims.append(dim)
        return dims

    def _require_built(self):
        if self.input_dim is None or any(
            isinstance(l, DenseLayer) and l.w is None for l in self.layers
        ):
            raise StructureError("network is not initialized")

    # -- inference ----------------------------------------------------

    def forward(self, x, training=False):
        x = self._check_input(x)
        for layer in self.layers:
            x = layer.forward(x, training=training)
        return x

    def forward_capture(self, x):
        """Inference pass that also returns every layer's output.

        ``captures[k]`` is the post-activation output of ``layers[k]``;
        the last entry equals the network output.
        """
        x = self._check_input(x)
        captures = []
        for layer in self.layers:
            x = layer.forward(x, training=False)
            captures.append(x)
        return x, captures

    def capture(self, x, layer_index):
        """Post-activation output of a hidden fully connected layer.

        This is the matrix the width probe decomposes; batch-norm
        running statistics are used (inference mode), never batch ones.
        """
        self.require_hidden_dense(layer_index)
        x = self._check_input(x)
        for layer in self.layers[: layer_index + 1]:
            x = layer.forward(x, training=False)
        return x

    def require_hidden_dense(self, layer_index):
        if not 0 <= layer_index < len(self.layers):
            raise LayerError(
                f"layer index {layer_index} out of range for {len(self.layers)} layers"
            )
        if layer_index not in self.hidden_dense_indices():
            raise LayerError(
                f"layer {layer_index} is not a hidden fully connected layer"
            )

    def forward_from(self, layer_index, h, training=False):
        """Resume inference given the output ``h`` of ``layers[layer_index]``."""
        if not 0 <= layer_index < len(self.layers):
            raise LayerError(f"layer index {layer_index} out of range")
        for layer in self.layers[layer_index + 1 :]:
            h = layer.forward(h, training=training)
        return h

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise ShapeError(f"input must be 2-D, got shape {x.shape}")
        if self.input_dim is not None and x.shape[1] != self.input_dim:
            raise ShapeError(
                f"input has {x.shape[1]} features, network expects {self.input_dim}"
            )
        return x

    # -- training support ---------------------------------------------

    def forward_train(self, x):
        """Training-mode pass; returns the output and a backward tape."""
        x = self._check_input(x)
        tapes = []
        for layer in self.layers:
            x, tape = layer.forward_tape(x)
            tapes.append(tape)
        return x, tapes

    def backward(self, grad_out, tapes):
        """Backpropagate; returns per-parameter grads matching parameters()."""
        grads_rev = []
        g = grad_out
        for layer, tape in zip(reversed(self.layers), reversed(tapes)):
            g, layer_grads = layer.backward(g, tape)
            grads_rev.extend(reversed(layer_grads))
        return list(reversed(grads_rev))

    def parameters(self):
        """Trainable arrays in a stable order (views, not copies)."""
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def parameter_count(self):
        return int(sum(p.size for p in self.parameters()))

    def get_state(self):
        """Copies of all arrays, including batch-norm running statistics."""
        state = []
        for layer in self.layers:
            for name in _STATE_NAMES[layer.kind]:
                state.append(getattr(layer, name).copy())
        return state

    def set_state(self, state):
        """Write arrays back; existing arrays are filled in place so any
        live views (e.g. an optimizer's parameter list) stay valid."""
        state = list(state)
        names = [
            (layer, name)
            for layer in self.layers
            for name in _STATE_NAMES[layer.kind]
        ]
        if len(state) != len(names):
            raise ShapeError(
                f"state has {len(state)} arrays, network needs {len(names)}"
            )
        for (layer, name), value in zip(names, state):
            value = np.asarray(value, dtype=np.float64)
            current = getattr(layer, name)
            if current is None:
                setattr(layer, name, value.copy())
            elif current.shape != value.shape:
                raise ShapeError(
                    f"state shape {value.shape} does not match {current.shape}"
                )
            else:
                current[...] = value

    # -- structure queries --------------------------------------------

    def dense_indices(self):
        return [i for i, l in enumerate(self.layers) if isinstance(l, DenseLayer)]

    def hidden_dense_indices(self):
        """Layer indices of every fully connected layer except the output one.

        These are the only valid probe points: the output layer's width
        is fixed by the task, so narrowing applies to hidden layers.
        """
        dense = self.dense_indices()
        return dense[:-1]

    # -- persistence --------------------------------------------------

    def spec_copy(self):
        """Unbuilt network with the same layer configuration; parameters
        are allocated by the caller's own initialize() call."""
        return Network([_LAYER_KINDS[l.kind](l.config()) for l in self.layers])

    def copy(self):
        clone = Network([_LAYER_KINDS[l.kind](l.config()) for l in self.layers])
        clone.input_dim = self.input_dim
        if self.input_dim is not None:
            rng = np.random.default_rng(0)
            dim = self.input_dim
            for layer in clone.layers:
                dim = layer.build(dim, rng)
            clone.set_state(self.get_state())
        return clone

    def architecture(self):
        return {
            "schema": "widthprobe-network/1",
            "input_dim": self.input_dim,
            "layers": [l.config() for l in self.layers],
        }

    def save(self, path):
        self._require_built()
        arrays = {"__meta__": np.frombuffer(
            json.dumps(self.architecture(), sort_keys=True).encode(), dtype=np.uint8
        )}
        for i, layer in enumerate(self.layers):
            for name in _STATE_NAMES[layer.kind]:
                arrays[f"L{i:03d}_{name}"] = getattr(layer, name)
        if hasattr(path, "write"):
            np.savez_compressed(path, **arrays)
        else:
            with open(path, "wb") as fh:
                np.savez_compressed(fh, **arrays)

    @classmethod
    def load(cls, path):
        with np.load(path) as data:
            meta = json.loads(bytes(data["__meta__"]).decode())
            if meta.get("schema") != "widthprobe-network/1":
                raise StructureError(f"unrecognized network file schema in {path}")
            net = cls([_LAYER_KINDS[cfg["kind"]](cfg) for cfg in meta["layers"]])
            net.initialize(meta["input_dim"], seed=0)
            state = []
            for i, layer in enumerate(net.layers):
                for name in _STATE_NAMES[layer.kind]:
                    state.append(np.asarray(data[f"L{i:03d}_{name}"], dtype=np.float64))
            net.set_state(state)
        return net

    def checksum(self):
        """SHA-256 over the architecture and every state array."""
        self._require_built()
        digest = hashlib.sha256()
        digest.update(json.dumps(self.architecture(), sort_keys=True).encode())
        for arr in self.get_state():
            digest.update(np.ascontiguousarray(arr).tobytes())
        return digest.hexdigest()

    def to_bytes(self):
        buf = io.BytesIO()
        self.save(buf)
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, blob):
        return cls.load(io.BytesIO(blob))
