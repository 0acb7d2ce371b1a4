"""Report objects and their renderings.

Every pipeline command emits one JSON report with a versioned schema.
Reports built from the same seeds are byte-identical except for the
``timing`` and ``environment`` sections, which exist precisely to hold
the run-dependent facts; everything else is derived from config and
data.  Renderers turn a report into a human summary or a plot-ready
TSV without recomputing anything.
"""

import json
import platform
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import FormatError

SCHEMA = "widthprobe-report/1"


def _plain(value):
    """Recursively convert numpy scalars/arrays to JSON-native types."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def environment_info():
    return {
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "platform": platform.platform(),
    }


@dataclass
class LayerEstimate:
    """Search outcome for one probed layer."""

    layer_index: int
    hidden_ordinal: int
    width: int
    m_found_per_pair: list
    m_mean: float
    m_final: int
    sweep: list = field(default_factory=list)
    non_monotonic: bool = False

    def pair_values(self):
        return [entry["m"] for entry in self.m_found_per_pair]

    def spread_fraction(self):
        """(max - min) of the per-pair estimates relative to their mean."""
        values = self.pair_values()
        mean = sum(values) / len(values)
        if mean == 0:
            return 0.0
        return (max(values) - min(values)) / mean


@dataclass
class EstimateReport:
    """Everything a width-estimate run decided, plus how to rerun it."""

    config: dict
    dataset: dict
    fold_plan: dict
    per_fold_val_q: list
    mean_val_q: float
    q_threshold: float
    universal_bounds: dict
    per_layer: list
    timing: dict = field(default_factory=dict)
    environment: dict = field(default_factory=environment_info)
    notes: list = field(default_factory=list)
    kind: str = "estimate"

    def to_dict(self):
        data = asdict(self)
        data["schema"] = SCHEMA
        return _plain(data)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        _check_schema(data, "estimate")
        data.pop("schema", None)
        data["per_layer"] = [LayerEstimate(**entry) for entry in data["per_layer"]]
        return cls(**data)


@dataclass
class VerifyReport:
    """Retrain-at-found-widths verification outcome."""

    config: dict
    dataset: dict
    fold_plan: dict
    widths: dict
    s_val_q: list
    d_val_q: list
    s_test_q: list
    d_test_q: list
    agreement: list
    worst_agreement: float
    threshold: float
    equivalent: bool
    timing: dict = field(default_factory=dict)
    environment: dict = field(default_factory=environment_info)
    notes: list = field(default_factory=list)
    kind: str = "verify"

    def to_dict(self):
        data = asdict(self)
        data["schema"] = SCHEMA
        return _plain(data)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        _check_schema(data, "verify")
        data.pop("schema", None)
        return cls(**data)


@dataclass
class TrainReport:
    """Cross-validated training outcome without any width search."""

    config: dict
    dataset: dict
    fold_plan: dict
    per_fold: list
    mean_val_q: float
    timing: dict = field(default_factory=dict)
    environment: dict = field(default_factory=environment_info)
    notes: list = field(default_factory=list)
    kind: str = "train"

    def to_dict(self):
        data = asdict(self)
        data["schema"] = SCHEMA
        return _plain(data)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        _check_schema(data, "train")
        data.pop("schema", None)
        return cls(**data)


_KINDS = {
    "estimate": EstimateReport,
    "verify": VerifyReport,
    "train": TrainReport,
}


def _check_schema(data, kind):
    if data.get("schema") != SCHEMA:
        raise FormatError(
            f"unrecognized report schema {data.get('schema')!r}, expected {SCHEMA}"
        )
    if data.get("kind") != kind:
        raise FormatError(f"report kind {data.get('kind')!r}, expected {kind!r}")


def report_from_dict(data):
    kind = data.get("kind")
    if kind not in _KINDS:
        raise FormatError(f"unrecognized report kind {kind!r}")
    return _KINDS[kind].from_dict(data)


def load_report(path):
    try:
        with open(path, "r") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise FormatError(f"cannot read report: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    return report_from_dict(data)


# -- renderers ---------------------------------------------------------


def _fmt(x, digits=4):
    return f"{x:.{digits}f}"


def render_summary(report):
    """Plain-text summary of any report object (or its dict form)."""
    if isinstance(report, dict):
        report = report_from_dict(report)
    lines = []
    if isinstance(report, EstimateReport):
        lines.append("minimum-width estimate")
        lines.append(_dataset_line(report.dataset))
        plan = report.fold_plan
        lines.append(
            f"folds: C={plan['c']} seed={plan['seed']} "
            f"(plan sha256 {plan['sha256'][:12]})"
        )
        metric = report.config.get("metric", "?")
        lines.append(
            f"metric: {metric}  mean validation {_fmt(report.mean_val_q)}  "
            f"threshold {_fmt(report.q_threshold)}"
        )
        bounds = report.universal_bounds
        lines.append(
            "universal width bounds: "
            f"in+out+2 = {bounds['sum_plus_two']}, "
            f"max(in, out) = {bounds['max_in_out']}"
        )
        for layer in report.per_layer:
            pairs = ", ".join(
                f"({e['i']},{e['j']})={e['m']}" for e in layer.m_found_per_pair
            )
            lines.append(
                f"layer {layer.layer_index} (hidden #{layer.hidden_ordinal}, "
                f"width {layer.width}): m_final = {layer.m_final}  "
                f"(mean {_fmt(layer.m_mean, 2)}, "
                f"spread {_fmt(100 * layer.spread_fraction(), 1)}% of mean)"
            )
            lines.append(f"  per-pair estimates: {pairs}")
            if layer.non_monotonic:
                lines.append(
                    "  warning: quality was not monotone in m on the "
                    "diagnostic sweep"
                )
    elif isinstance(report, VerifyReport):
        lines.append("retrain verification at found widths")
        lines.append(_dataset_line(report.dataset))
        widths = ", ".join(f"layer {k}: {v}" for k, v in report.widths.items())
        lines.append(f"retrained widths: {widths}")
        lines.append(
            f"validation metric: original {_fmt(_mean(report.s_val_q))}  "
            f"retrained {_fmt(_mean(report.d_val_q))}"
        )
        lines.append(
            f"test metric: original {_fmt(_mean(report.s_test_q))}  "
            f"retrained {_fmt(_mean(report.d_test_q))}"
        )
        lines.append(
            f"test-set agreement: mean {_fmt(_mean_matrix(report.agreement))}  "
            f"worst {_fmt(report.worst_agreement)}  "
            f"threshold {_fmt(report.threshold)}"
        )
        lines.append(
            "verdict: statistically equivalent"
            if report.equivalent
            else "verdict: NOT equivalent"
        )
    elif isinstance(report, TrainReport):
        lines.append("cross-validated training")
        lines.append(_dataset_line(report.dataset))
        lines.append(f"mean validation metric: {_fmt(report.mean_val_q)}")
        for entry in report.per_fold:
            lines.append(
                f"fold {entry['fold']}: val {_fmt(entry['val_q'])} "
                f"after {entry['epochs']} epochs"
            )
    for note in report.notes:
        lines.append(f"note: {note}")
    seconds = report.timing.get("seconds_total")
    if seconds is not None:
        lines.append(f"wall time: {seconds:.1f}s")
    return "\n".join(lines) + "\n"


def _dataset_line(dataset):
    return (
        f"dataset: {dataset['n']} samples, {dataset['n_features']} features, "
        f"{dataset['n_targets']} targets, task {dataset['task']}"
    )


def _mean(values):
    return sum(values) / len(values)


def _mean_matrix(matrix):
    flat = [v for row in matrix for v in row]
    return sum(flat) / len(flat)


def render_sweep_tsv(report):
    """Q(m) diagnostic sweep as TSV columns: layer, m, worst_q."""
    if isinstance(report, dict):
        report = report_from_dict(report)
    if not isinstance(report, EstimateReport):
        raise FormatError("sweep rendering needs an estimate report")
    lines = ["layer\tm\tworst_q"]
    for layer in report.per_layer:
        for point in layer.sweep:
            lines.append(f"{layer.layer_index}\t{point['m']}\t{point['worst_q']!r}")
    return "\n".join(lines) + "\n"
