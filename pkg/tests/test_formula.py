import pytest

from widthprobe import (
    BatchNormLayer,
    DenseLayer,
    FlattenLayer,
    FormulaError,
    parse_formula,
    render_formula,
)


def kinds(layers):
    out = []
    for layer in layers:
        if isinstance(layer, DenseLayer):
            out.append(("dense", layer.units, layer.activation))
        elif isinstance(layer, BatchNormLayer):
            out.append(("batchnorm",))
        elif isinstance(layer, FlattenLayer):
            out.append(("flatten",))
    return out


class TestParse:
    def test_regression_formula(self):
        layers = parse_formula("FCx1(linear),FCx200(ReLU),BN")
        assert kinds(layers) == [
            ("batchnorm",),
            ("dense", 200, "relu"),
            ("dense", 1, "linear"),
        ]

    def test_image_classifier_formula(self):
        layers = parse_formula("FCx10(Softmax),FCx128(Abs),FCx128(Abs),BN")
        assert kinds(layers) == [
            ("batchnorm",),
            ("dense", 128, "abs"),
            ("dense", 128, "abs"),
            ("dense", 10, "softmax"),
        ]

    def test_flatten_token(self):
        layers = parse_formula("FCx10(Softmax),FCx300(ReLU),FCx300(ReLU),BN,FL")
        assert kinds(layers)[0] == ("flatten",)
        assert kinds(layers)[1] == ("batchnorm",)
        assert kinds(layers)[-1] == ("dense", 10, "softmax")

    def test_order_is_reversed(self):
        # leftmost token is the output layer
        layers = parse_formula("FCx3(Softmax),FCx7(Abs)")
        assert kinds(layers) == [("dense", 7, "abs"), ("dense", 3, "softmax")]

    def test_case_insensitive(self):
        a = kinds(parse_formula("fcx5(relu),bn"))
        b = kinds(parse_formula("FCX5(RELU),BN"))
        assert a == b == [("batchnorm",), ("dense", 5, "relu")]

    def test_whitespace_tolerated(self):
        layers = parse_formula("  FCx10 (Softmax) , FCx20 (Abs) , BN  ")
        assert kinds(layers) == [
            ("batchnorm",),
            ("dense", 20, "abs"),
            ("dense", 10, "softmax"),
        ]

    def test_zero_width_rejected(self):
        with pytest.raises(FormulaError):
            parse_formula("FCx0(ReLU)")

    def test_unknown_activation(self):
        with pytest.raises(FormulaError):
            parse_formula("FCx5(tanh)")

    def test_unknown_token_reports_position(self):
        with pytest.raises(FormulaError) as excinfo:
            parse_formula("FCx5(ReLU),GRU,BN")
        assert "GRU" in str(excinfo.value)

    def test_empty_string(self):
        with pytest.raises(FormulaError):
            parse_formula("")
        with pytest.raises(FormulaError):
            parse_formula("   ")

    def test_empty_token(self):
        with pytest.raises(FormulaError):
            parse_formula("FCx5(ReLU),,BN")

    def test_hidden_softmax_rejected(self):
        with pytest.raises(FormulaError):
            parse_formula("FCx3(linear),FCx5(Softmax)")

    def test_missing_activation_parens(self):
        with pytest.raises(FormulaError):
            parse_formula("FCx5")


class TestRender:
    def test_round_trip(self):
        for text in (
            "FCx1(linear),FCx200(ReLU),BN",
            "FCx10(Softmax),FCx128(Abs),FCx128(Abs),BN",
            "FCx10(Softmax),FCx300(ReLU),FCx300(ReLU),BN,FL",
        ):
            layers = parse_formula(text)
            rendered = render_formula(layers)
            assert kinds(parse_formula(rendered)) == kinds(layers)

    def test_rendered_style(self):
        rendered = render_formula(parse_formula("FCx10(Softmax),FCx300(ReLU),BN,FL"))
        assert rendered == "FCx10 (Softmax), FCx300 (ReLU), BN, FL"

    def test_activation_names(self):
        rendered = render_formula(parse_formula("FCx1(linear),FCx2(abs),FCx3(relu)"))
        assert "linear" in rendered
        assert "Abs" in rendered
        assert "ReLU" in rendered
