"""Run execution and the in-memory job registry.

A run executes synchronously inside ``execute_run``; the registry puts
each one on a daemon thread and exposes snapshots for polling.  All
artifacts (report, rendered summary, sweep TSV, serialized networks)
stay in memory on the service side; clients fetch them over HTTP.
"""

import threading
import time
import uuid
from dataclasses import dataclass, field

from ..data import (
    downscale_8x8,
    apply_standardize,
    feature_stats,
    load_csv,
    load_idx,
    split_dataset,
    Dataset,
)
from ..equiv import get_metric
from ..errors import ConfigError, WidthProbeError
from ..formula import parse_formula
from ..nn import Network
from ..report import TrainReport, render_summary, render_sweep_tsv
from ..search import (
    SearchConfig,
    cross_validate_train,
    estimate_min_neurons,
    verify_retrain,
)
from ..search import _config_section, _dataset_section, _fold_plan_section
from ..training import TrainSchedule


def build_datasets(model):
    """Resolve a dataset description into (train, test-or-None).

    CSV standardization always derives its statistics from the training
    rows only and applies them to both splits.
    """
    if model.kind == "idx":
        ds = load_idx(model.images, model.labels)
        if model.downscale_8x8:
            ds = downscale_8x8(ds)
        test = None
        if model.test_images:
            test = load_idx(model.test_images, model.test_labels)
            if model.downscale_8x8:
                test = downscale_8x8(test)
        elif model.test_fraction:
            ds, test = split_dataset(ds, model.test_fraction, model.split_seed)
        return ds, test

    ds = load_csv(
        model.path,
        model.target_columns,
        standardize=False,
        delimiter=model.delimiter,
    )
    test = None
    if model.test_fraction:
        ds, test = split_dataset(ds, model.test_fraction, model.split_seed)
    if model.standardize:
        mean, std = feature_stats(ds.x, ds.feature_names)
        ds = Dataset(
            apply_standardize(ds.x, mean, std), ds.t, ds.task, ds.feature_names
        )
        if test is not None:
            test = Dataset(
                apply_standardize(test.x, mean, std),
                test.t,
                test.task,
                test.feature_names,
            )
    return ds, test


def _ordinals_to_indices(template, ordinals):
    """Translate 1-based hidden-layer positions to absolute indices."""
    hidden = template.hidden_dense_indices()
    if not hidden:
        raise ConfigError("the network has no hidden fully connected layers")
    out = []
    for k in ordinals:
        if not 1 <= k <= len(hidden):
            raise ConfigError(
                f"layer {k} does not exist; the network has "
                f"{len(hidden)} hidden fully connected layers"
            )
        out.append(hidden[k - 1])
    return out


@dataclass
class RunOutcome:
    report: object
    summary: str
    sweep: str = None
    networks: list = field(default_factory=list)


def execute_run(request):
    """Run one command to completion and return its artifacts."""
    train_ds, test_ds = build_datasets(request.dataset)
    template = Network(parse_formula(request.formula))

    metric_name = request.metric or (
        "accuracy" if train_ds.task == "classification" else "mse"
    )
    metric = get_metric(metric_name)
    if request.schedule is not None:
        schedule = request.schedule.to_schedule()
    else:
        loss = "cross_entropy" if train_ds.task == "classification" else "mse"
        schedule = TrainSchedule(loss=loss)

    probe_layers = _ordinals_to_indices(template, request.layers)
    config = SearchConfig(
        c=request.folds,
        layers_to_probe=tuple(probe_layers),
        metric=metric,
        n_bootstrap=request.bootstrap_n,
        master_seed=request.seed,
        schedule=schedule,
        jobs=request.jobs,
        sweep_points=request.sweep_points,
    )

    if request.command == "estimate":
        report = estimate_min_neurons(template, train_ds, config)
        report.dataset["source"] = request.dataset.model_dump(exclude_none=True)
        return RunOutcome(
            report=report,
            summary=render_summary(report),
            sweep=render_sweep_tsv(report),
        )

    if request.command == "train":
        return _run_train(template, train_ds, config, request)

    if request.command == "verify":
        if test_ds is None:
            raise ConfigError(
                "verify needs a held-out test set: give test files or "
                "a test_fraction in the dataset description"
            )
        hidden = template.hidden_dense_indices()
        target_layers = probe_layers or hidden
        if len(request.widths) != len(target_layers):
            raise ConfigError(
                f"{len(request.widths)} widths given for "
                f"{len(target_layers)} hidden layers"
            )
        widths = dict(zip(target_layers, request.widths))
        verify_schedule = (
            request.verify_schedule.to_schedule()
            if request.verify_schedule is not None
            else None
        )
        report = verify_retrain(
            template,
            widths,
            train_ds,
            config,
            test_ds,
            verify_schedule=verify_schedule,
        )
        report.dataset["source"] = request.dataset.model_dump(exclude_none=True)
        return RunOutcome(report=report, summary=render_summary(report))

    raise ConfigError(f"unknown command {request.command!r}")


def _run_train(template, train_ds, config, request):
    t_start = time.time()
    ensemble = cross_validate_train(template, train_ds, config, probe_layers=[])
    t_done = time.time()
    per_fold = [
        {
            "fold": fold,
            "val_q": float(ensemble.val_qs[fold]),
            "epochs": ensemble.train_results[fold].epochs,
            "best_epoch": ensemble.train_results[fold].best_epoch,
            "best_val_loss": float(ensemble.train_results[fold].best_val_loss),
            "checksum": ensemble.networks[fold].checksum(),
        }
        for fold in range(ensemble.c)
    ]
    dataset_section = _dataset_section(train_ds)
    dataset_section["source"] = request.dataset.model_dump(exclude_none=True)
    report = TrainReport(
        config=_config_section(config, template),
        dataset=dataset_section,
        fold_plan=_fold_plan_section(ensemble.plan),
        per_fold=per_fold,
        mean_val_q=float(sum(ensemble.val_qs) / len(ensemble.val_qs)),
        timing={
            "started_unix": t_start,
            "seconds_total": t_done - t_start,
        },
    )
    networks = [net.to_bytes() for net in ensemble.networks]
    return RunOutcome(
        report=report, summary=render_summary(report), networks=networks
    )


@dataclass
class Job:
    run_id: str
    request: object
    state: str = "queued"
    error: str = None
    created_unix: float = 0.0
    finished_unix: float = None
    outcome: RunOutcome = None


class JobRegistry:
    """Threaded run store; snapshots are safe to read while a run works."""

    def __init__(self):
        self._jobs = {}
        self._lock = threading.Lock()

    def create(self, request):
        job = Job(
            run_id=uuid.uuid4().hex[:12],
            request=request,
            created_unix=time.time(),
        )
        with self._lock:
            self._jobs[job.run_id] = job
        thread = threading.Thread(target=self._run, args=(job,), daemon=True)
        thread.start()
        return job

    def _run(self, job):
        job.state = "running"
        try:
            outcome = execute_run(job.request)
        except WidthProbeError as exc:
            job.error = str(exc)
            job.state = "error"
        except Exception as exc:  # keep the service alive on any failure
            job.error = f"{type(exc).__name__}: {exc}"
            job.state = "error"
        else:
            job.outcome = outcome
            job.state = "done"
        job.finished_unix = time.time()

    def get(self, run_id):
        with self._lock:
            return self._jobs.get(run_id)

    def list(self):
        with self._lock:
            return sorted(self._jobs.values(), key=lambda j: j.created_unix)
