"""Architecture formula strings.

A formula names layers output-first, the way results tables usually
read, e.g. ``"FCx10 (Softmax), FCx300 (ReLU), BN, FL"``.  Parsing
reverses that into forward execution order.  Three layer tokens exist:
``FCxN(Activation)`` for a fully connected layer, ``BN`` for batch
normalization, and ``FL`` for flatten.
"""

import re

from .errors import FormulaError
from .nn import BatchNormLayer, DenseLayer, FlattenLayer

_DENSE = re.compile(r"FC\s*x\s*(\d+)\s*\(\s*([A-Za-z]+)\s*\)\s*$", re.IGNORECASE)

_ACTIVATION_NAMES = {
    "linear": "linear",
    "relu": "relu",
    "abs": "abs",
    "softmax": "softmax",
}

_RENDER_NAMES = {
    "linear": "linear",
    "relu": "ReLU",
    "abs": "Abs",
    "softmax": "Softmax",
}


def _split_tokens(s):
    """Comma-separated tokens with their 1-based character positions."""
    tokens = []
    pos = 0
    for chunk in s.split(","):
        stripped = chunk.strip()
        start = pos + (len(chunk) - len(chunk.lstrip()))
        tokens.append((stripped, start + 1))
        pos += len(chunk) + 1
    return tokens


def _parse_token(token, pos):
    upper = token.upper()
    if upper == "BN":
        return BatchNormLayer()
    if upper == "FL":
        return FlattenLayer()
    match = _DENSE.match(token)
    if match:
        units = int(match.group(1))
        if units < 1:
            raise FormulaError(
                f"layer width must be at least 1 at position {pos}: {token!r}"
            )
        name = match.group(2).lower()
        if name not in _ACTIVATION_NAMES:
            raise FormulaError(
                f"unknown activation {match.group(2)!r} at position {pos}; "
                f"expected one of {sorted(_RENDER_NAMES.values())}"
            )
        return DenseLayer(units, _ACTIVATION_NAMES[name])
    raise FormulaError(f"unrecognized layer token at position {pos}: {token!r}")


def parse_formula(s):
    """Parse an output-first formula into forward-order layer specs.

    Softmax is accepted only on the output layer (the first token).
    """
    if not s or not s.strip():
        raise FormulaError("formula string is empty")
    parsed = []
    for token, pos in _split_tokens(s):
        if not token:
            raise FormulaError(f"empty layer token at position {pos}")
        parsed.append((_parse_token(token, pos), pos))
    parsed.reverse()
    layers = [layer for layer, _ in parsed]
    for layer, pos in parsed[:-1]:
        if isinstance(layer, DenseLayer) and layer.activation == "softmax":
            raise FormulaError(
                f"softmax is only allowed on the output layer "
                f"(offending token at position {pos})"
            )
    return layers


def render_formula(layers):
    """Format a layer list back into the output-first notation.

    ``parse_formula(render_formula(layers))`` reproduces the layers.
    """
    if not layers:
        raise FormulaError("cannot render an empty layer list")
    tokens = []
    for layer in reversed(list(layers)):
        if isinstance(layer, DenseLayer):
            tokens.append(f"FCx{layer.units} ({_RENDER_NAMES[layer.activation]})")
        elif isinstance(layer, BatchNormLayer):
            tokens.append("BN")
        elif isinstance(layer, FlattenLayer):
            tokens.append("FL")
        else:
            raise FormulaError(f"cannot render layer of type {type(layer).__name__}")
    return ", ".join(tokens)
