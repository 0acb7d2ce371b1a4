"""End-to-end minimum-width search and retrain verification.

The pipeline trains one network per cross-validation fold, decomposes
every probed layer's output over the full dataset, and then, for each
ordered fold pair (i, j), bisects the truncation level of a probe
inserted into network j until the bootstrap worst-case agreement with
network i sits right at the equivalence threshold.  The per-pair
estimates are averaged (and rounded up) into one width per layer.

All randomness flows from a single master seed through tagged streams,
so results are identical regardless of how many worker threads run the
independent jobs.
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .data import make_folds
from .equiv import (
    DEFAULT_BOOTSTRAP_N,
    Metric,
    build_pair_eval_set,
    evaluation_stream,
    metric_eval,
    threshold_q0,
    worst_q_from_predictions,
)
from .errors import ConfigError, StructureError, TrainError
from .linalg import thin_svd
from .nn import DenseLayer, Network
from .probe import ProbedNetwork, build_autoencoder
from .report import EstimateReport, LayerEstimate, VerifyReport, environment_info
from .training import TrainSchedule, train

# Stream tags namespace the RNG uses hanging off one master seed.
# equiv.BOOTSTRAP_STREAM_TAG is 3.
INIT_STREAM = 1
SHUFFLE_STREAM = 2
VERIFY_INIT_STREAM = 4
VERIFY_SHUFFLE_STREAM = 5

SWEEP_EPS = 5e-3


@dataclass(frozen=True)
class SearchConfig:
    """Everything the search needs beyond the network and the data."""

    c: int = 2
    layers_to_probe: tuple = ()
    metric: Metric = field(default_factory=Metric.accuracy)
    n_bootstrap: int = DEFAULT_BOOTSTRAP_N
    master_seed: int = 0
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    jobs: int = 1
    sweep_points: int = 8

    def __post_init__(self):
        if self.c < 2:
            raise ConfigError(f"fold count must be at least 2, got {self.c}")
        if self.n_bootstrap < 1:
            raise ConfigError(
                f"bootstrap count must be at least 1, got {self.n_bootstrap}"
            )
        if self.master_seed < 0:
            raise ConfigError(f"master seed must be non-negative, got {self.master_seed}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be at least 1, got {self.jobs}")
        if self.sweep_points < 0:
            raise ConfigError(f"sweep_points must be non-negative, got {self.sweep_points}")
        object.__setattr__(
            self, "layers_to_probe", tuple(int(k) for k in self.layers_to_probe)
        )

    def to_dict(self):
        return {
            "c": self.c,
            "layers_to_probe": list(self.layers_to_probe),
            "metric": self.metric.kind,
            "n_bootstrap": self.n_bootstrap,
            "master_seed": self.master_seed,
            "schedule": self.schedule.to_dict(),
            "jobs": self.jobs,
            "sweep_points": self.sweep_points,
        }


@dataclass
class TrainedEnsemble:
    """One trained network per fold plus per-layer output decompositions."""

    plan: object
    networks: list
    val_qs: list
    factors: dict
    train_results: list

    @property
    def c(self):
        return len(self.networks)


def resolve_probe_layers(net, layers_to_probe=()):
    """Absolute indices of the layers to probe; default is every hidden
    fully connected layer."""
    hidden = net.hidden_dense_indices()
    if not hidden:
        raise StructureError("network has no hidden fully connected layers to probe")
    if not layers_to_probe:
        return list(hidden)
    resolved = sorted(set(int(k) for k in layers_to_probe))
    for k in resolved:
        net.require_hidden_dense(k)
    return resolved


def _run_jobs(jobs, tasks):
    """Run callables, preserving order; results do not depend on pool
    width because every task owns its seeds."""
    if jobs <= 1 or len(tasks) <= 1:
        return [task() for task in tasks]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return [f.result() for f in [pool.submit(task) for task in tasks]]


def _train_one_fold(template, data, plan, fold, config, seed_tags, probe_layers):
    init_tag, shuffle_tag = seed_tags
    train_idx = plan.train_indices(fold)
    val_idx = plan.val_indices(fold)
    net = template.spec_copy().initialize(
        data.n_features, seed=(config.master_seed, init_tag, fold)
    )
    try:
        result = train(
            net,
            data.x[train_idx],
            data.t[train_idx],
            data.x[val_idx],
            data.t[val_idx],
            schedule=config.schedule,
            seed=(config.master_seed, shuffle_tag, fold),
        )
    except TrainError as exc:
        raise TrainError(f"fold {fold}: {exc}", epoch=exc.epoch) from exc
    val_q = metric_eval(config.metric, net.forward(data.x[val_idx]), data.t[val_idx])
    factors = {
        layer: thin_svd(net.capture(data.x, layer)) for layer in probe_layers
    }
    return net, val_q, factors, result


def cross_validate_train(template, data, config, plan=None, probe_layers=None,
                         seed_tags=(INIT_STREAM, SHUFFLE_STREAM)):
    """Train one network per fold and decompose the probed layers.

    Returns the trained ensemble: networks, their validation metrics
    against ground truth, and a thin SVD of each probed layer's output
    captured over the full dataset in inference mode.
    """
    if plan is None:
        plan = make_folds(data.n, config.c, seed=config.master_seed)
    if probe_layers is None:
        probe_layers = resolve_probe_layers(template, config.layers_to_probe)

    tasks = [
        (lambda fold=fold: _train_one_fold(
            template, data, plan, fold, config, seed_tags, probe_layers
        ))
        for fold in range(plan.c)
    ]
    outcomes = _run_jobs(config.jobs, tasks)

    networks = [o[0] for o in outcomes]
    val_qs = [o[1] for o in outcomes]
    factors = {
        layer: [o[2][layer] for o in outcomes] for layer in probe_layers
    }
    results = [o[3] for o in outcomes]
    return TrainedEnsemble(
        plan=plan,
        networks=networks,
        val_qs=val_qs,
        factors=factors,
        train_results=results,
    )


def bisect_threshold(width, is_acceptable):
    """Smallest level in [1, width] that ``is_acceptable`` accepts,
    assuming acceptance is monotone in the level; ``width`` when no
    evaluated level is acceptable.

    Classic bracket bisection: the lower bound starts at the sentinel 0
    (never evaluated, always unacceptable), so level 1 is reachable.
    At most ceil(log2(width)) evaluations.
    """
    if width < 1:
        raise ConfigError(f"width must be at least 1, got {width}")
    lo, hi = 0, width
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if is_acceptable(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _pair_worst_q(ensemble, layer, i, j, m, t_s, h_j, config):
    probe = build_autoencoder(ensemble.factors[layer][j], m, layer)
    probed = ProbedNetwork(ensemble.networks[j], probe)
    t_d = probed.forward_from_capture(h_j)
    rng = evaluation_stream(config.master_seed, layer, i, j, m)
    return worst_q_from_predictions(
        t_s, t_d, config.metric, n=config.n_bootstrap, rng=rng
    )


def bisect_layer_width(layer, pair, ensemble, data, q_search, config):
    """Minimum truncation level keeping network j's probed predictions
    statistically equivalent to network i's, judged on the rows held
    out from both training runs."""
    i, j = pair
    x_eval = build_pair_eval_set(data, ensemble.plan, i, j).x
    t_s = ensemble.networks[i].forward(x_eval)
    h_j = ensemble.networks[j].capture(x_eval, layer)
    width = ensemble.networks[j].layer_dims()[layer]

    def acceptable(m):
        worst = _pair_worst_q(ensemble, layer, i, j, m, t_s, h_j, config)
        return not config.metric.worse(worst, q_search)

    return bisect_threshold(width, acceptable)


def _sweep_layer(layer, ensemble, data, config):
    """Coarse Q(m) trace on fold pair (0, 1) for diagnostics."""
    if config.sweep_points == 0:
        return [], False
    i, j = 0, 1
    x_eval = build_pair_eval_set(data, ensemble.plan, i, j).x
    t_s = ensemble.networks[i].forward(x_eval)
    h_j = ensemble.networks[j].capture(x_eval, layer)
    width = ensemble.networks[j].layer_dims()[layer]
    points = sorted(
        set(
            int(round(m))
            for m in np.linspace(1, width, min(config.sweep_points, width))
        )
    )
    trace = [
        {
            "m": m,
            "worst_q": _pair_worst_q(ensemble, layer, i, j, m, t_s, h_j, config),
        }
        for m in points
    ]
    non_monotonic = False
    for a, b in zip(trace, trace[1:]):
        # Larger m keeps more of the layer, so quality should not get
        # worse; flag drops beyond a small tolerance.
        if config.metric.worse(b["worst_q"], a["worst_q"]) and (
            abs(b["worst_q"] - a["worst_q"]) > SWEEP_EPS
        ):
            non_monotonic = True
    return trace, non_monotonic


def search_widths(ensemble, data, config, probe_layers=None):
    """Run the per-layer, per-fold-pair bisections on a trained ensemble.

    Returns (per_layer list of LayerEstimate, q_search, notes).
    Factored out from estimate_min_neurons so synthetic ensembles can be
    searched directly.
    """
    if probe_layers is None:
        probe_layers = sorted(ensemble.factors)
    mean_val_q = float(np.mean(ensemble.val_qs))
    q_search = threshold_q0(mean_val_q, config.metric)
    pairs = [
        (i, j)
        for i in range(ensemble.c)
        for j in range(ensemble.c)
        if i != j
    ]

    tasks = [
        (lambda layer=layer, pair=pair: bisect_layer_width(
            layer, pair, ensemble, data, q_search, config
        ))
        for layer in probe_layers
        for pair in pairs
    ]
    found = _run_jobs(config.jobs, tasks)

    sweep_tasks = [
        (lambda layer=layer: _sweep_layer(layer, ensemble, data, config))
        for layer in probe_layers
    ]
    sweeps = _run_jobs(config.jobs, sweep_tasks)

    hidden = ensemble.networks[0].hidden_dense_indices()
    dims = ensemble.networks[0].layer_dims()
    per_layer = []
    notes = []
    for li, layer in enumerate(probe_layers):
        values = found[li * len(pairs) : (li + 1) * len(pairs)]
        m_mean = float(np.mean(values))
        sweep, non_monotonic = sweeps[li]
        entry = LayerEstimate(
            layer_index=layer,
            hidden_ordinal=hidden.index(layer) + 1,
            width=dims[layer],
            m_found_per_pair=[
                {"i": i, "j": j, "m": int(m)} for (i, j), m in zip(pairs, values)
            ],
            m_mean=m_mean,
            m_final=int(math.ceil(m_mean - 1e-9)),
            sweep=sweep,
            non_monotonic=bool(non_monotonic),
        )
        per_layer.append(entry)
        if non_monotonic:
            notes.append(
                f"layer {layer}: worst-case quality was not monotone in m "
                f"on the diagnostic sweep (tolerance {SWEEP_EPS})"
            )
    return per_layer, q_search, notes


def _universal_bounds(data):
    """Width bounds that depend only on the task's input/output sizes."""
    return {
        "sum_plus_two": int(data.n_features + data.n_targets + 2),
        "max_in_out": int(max(data.n_features, data.n_targets)),
    }


def _dataset_section(data):
    return {
        "n": int(data.n),
        "n_features": int(data.n_features),
        "n_targets": int(data.n_targets),
        "task": data.task,
    }


def _fold_plan_section(plan):
    return {
        "n": int(plan.n),
        "c": int(plan.c),
        "seed": int(plan.seed),
        "sha256": plan.checksum(),
    }


def _config_section(config, template):
    echo = config.to_dict()
    echo["comparison_orientation"] = (
        "trained network i vs probed network j, ordered pairs (i, j)"
    )
    echo["adam"] = {"beta1": 0.9, "beta2": 0.999, "epsilon": 1e-7}
    echo["batchnorm"] = {"epsilon": 1e-3, "momentum": 0.99}
    echo["init"] = "uniform fan-in/fan-out"
    try:
        from .formula import FormulaError, render_formula

        echo["formula"] = render_formula(template.layers)
    except FormulaError:
        echo["formula"] = None
    return echo


def estimate_min_neurons(template, data, config):
    """Full estimation pipeline; returns an EstimateReport."""
    t_start = time.time()
    probe_layers = resolve_probe_layers(template, config.layers_to_probe)
    ensemble = cross_validate_train(template, data, config, probe_layers=probe_layers)
    t_trained = time.time()
    per_layer, q_search, notes = search_widths(
        ensemble, data, config, probe_layers=probe_layers
    )
    t_done = time.time()

    report = EstimateReport(
        config=_config_section(config, template),
        dataset=_dataset_section(data),
        fold_plan=_fold_plan_section(ensemble.plan),
        per_fold_val_q=[float(q) for q in ensemble.val_qs],
        mean_val_q=float(np.mean(ensemble.val_qs)),
        q_threshold=float(q_search),
        universal_bounds=_universal_bounds(data),
        per_layer=per_layer,
        timing={
            "started_unix": t_start,
            "seconds_train": t_trained - t_start,
            "seconds_search": t_done - t_trained,
            "seconds_total": t_done - t_start,
        },
        environment=environment_info(),
        notes=notes,
    )
    return report


def narrowed_template(template, widths):
    """Copy of the architecture with hidden layer widths replaced.

    ``widths`` maps absolute layer index to the new neuron count.
    """
    narrowed = template.spec_copy()
    hidden = narrowed.hidden_dense_indices()
    for layer_index, m in widths.items():
        layer_index = int(layer_index)
        if layer_index not in hidden:
            raise StructureError(
                f"layer {layer_index} is not a hidden fully connected layer"
            )
        if m < 1:
            raise ConfigError(f"width for layer {layer_index} must be >= 1, got {m}")
        narrowed.layers[layer_index] = DenseLayer(
            int(m), narrowed.layers[layer_index].activation
        )
    return narrowed


def verify_retrain(template, widths, data, config, test_set, s_ensemble=None,
                   verify_schedule=None):
    """Retrain at the found widths and compare against the originals.

    Trains C narrowed networks on the same fold plan (fresh seeds), then
    measures all C x C prediction agreements between original and
    narrowed networks on the held-out test set.  The verdict compares
    the worst agreement against the originals' own mean test metric.
    """
    t_start = time.time()
    if test_set.n_features != data.n_features or test_set.task != data.task:
        raise ConfigError("test set does not match the training dataset")
    if verify_schedule is None:
        verify_schedule = TrainSchedule.multi_rate(
            patience=10,
            batch_size=config.schedule.batch_size,
            loss=config.schedule.loss,
            max_epochs=config.schedule.max_epochs,
        )

    plan = (
        s_ensemble.plan
        if s_ensemble is not None
        else make_folds(data.n, config.c, seed=config.master_seed)
    )
    if s_ensemble is None:
        s_ensemble = cross_validate_train(
            template, data, config, plan=plan, probe_layers=[]
        )

    narrowed = narrowed_template(template, widths)
    d_config = replace(config, schedule=verify_schedule)
    d_ensemble = cross_validate_train(
        narrowed,
        data,
        d_config,
        plan=plan,
        probe_layers=[],
        seed_tags=(VERIFY_INIT_STREAM, VERIFY_SHUFFLE_STREAM),
    )

    metric = config.metric
    s_test_pred = [net.forward(test_set.x) for net in s_ensemble.networks]
    d_test_pred = [net.forward(test_set.x) for net in d_ensemble.networks]
    s_test_q = [metric_eval(metric, p, test_set.t) for p in s_test_pred]
    d_test_q = [metric_eval(metric, p, test_set.t) for p in d_test_pred]
    agreement = [
        [metric_eval(metric, s_p, d_p) for d_p in d_test_pred]
        for s_p in s_test_pred
    ]
    worst_agreement = metric.worst([v for row in agreement for v in row])
    threshold = float(np.mean(s_test_q))
    equivalent = not metric.worse(worst_agreement, threshold)
    t_done = time.time()

    echo = _config_section(config, template)
    echo["verify_schedule"] = verify_schedule.to_dict()
    report = VerifyReport(
        config=echo,
        dataset=_dataset_section(data),
        fold_plan=_fold_plan_section(plan),
        widths={str(k): int(v) for k, v in sorted(widths.items())},
        s_val_q=[float(q) for q in s_ensemble.val_qs],
        d_val_q=[float(q) for q in d_ensemble.val_qs],
        s_test_q=[float(q) for q in s_test_q],
        d_test_q=[float(q) for q in d_test_q],
        agreement=[[float(v) for v in row] for row in agreement],
        worst_agreement=float(worst_agreement),
        threshold=threshold,
        equivalent=bool(equivalent),
        timing={
            "started_unix": t_start,
            "seconds_total": t_done - t_start,
        },
        environment=environment_info(),
        notes=[
            "equivalence threshold is the original ensemble's mean "
            "test-set metric against ground truth"
        ],
    )
    return report
