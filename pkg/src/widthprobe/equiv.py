"""Prediction-agreement metrics and the bootstrap equivalence test.

Two trained networks are compared through their predictions on a shared
evaluation set, never through ground truth: Accuracy here is the
fraction of rows where the two argmax decisions agree, and MSE is the
mean squared difference between the two output matrices.  The
worst-case estimator resamples the paired predictions with replacement
many times and keeps the single worst metric value seen, a pessimistic
summary that a threshold can then be applied to.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, ShapeError

DEFAULT_BOOTSTRAP_N = 10000

# Tag that namespaces bootstrap RNG streams apart from the training
# streams derived from the same master seed.
BOOTSTRAP_STREAM_TAG = 3

# Along rows are samples; both prediction matrices must align row-wise.


@dataclass(frozen=True)
class Metric:
    """A quality measure with an explicit notion of which way is worse."""

    kind: str
    best_value: float
    worse_direction: str

    @classmethod
    def accuracy(cls):
        return cls(kind="accuracy", best_value=1.0, worse_direction="lower")

    @classmethod
    def mse(cls):
        return cls(kind="mse", best_value=0.0, worse_direction="higher")

    def worse(self, a, b):
        """True when value ``a`` is strictly worse than ``b``."""
        return a < b if self.worse_direction == "lower" else a > b

    def worst(self, values):
        """The single worst value of a non-empty collection."""
        values = np.asarray(values)
        if values.size == 0:
            raise ShapeError("cannot take the worst of zero values")
        return float(values.min() if self.worse_direction == "lower" else values.max())


METRICS = {"accuracy": Metric.accuracy, "mse": Metric.mse}


def get_metric(name):
    try:
        return METRICS[name]()
    except KeyError:
        raise ConfigError(
            f"unknown metric {name!r}; expected one of {sorted(METRICS)}"
        ) from None


def _check_pair(t, t_prime):
    t = np.asarray(t, dtype=np.float64)
    t_prime = np.asarray(t_prime, dtype=np.float64)
    if t.shape != t_prime.shape:
        raise ShapeError(
            f"prediction shapes differ: {t.shape} vs {t_prime.shape}"
        )
    if t.ndim != 2 or t.shape[0] < 1:
        raise ShapeError(f"predictions must be 2-D with rows, got shape {t.shape}")
    return t, t_prime


def _row_scores(metric, t, t_prime):
    """Per-row contribution whose plain mean equals metric_eval."""
    if metric.kind == "accuracy":
        return (np.argmax(t, axis=1) == np.argmax(t_prime, axis=1)).astype(
            np.float64
        )
    return np.mean((t - t_prime) ** 2, axis=1)


def metric_eval(metric, t, t_prime):
    """Agreement between two prediction matrices (not vs ground truth)."""
    t, t_prime = _check_pair(t, t_prime)
    return float(np.mean(_row_scores(metric, t, t_prime)))


def bootstrapped_pairs(t, t_prime, rng):
    """One bootstrap resample: n rows drawn with replacement, the same
    row indices applied to both matrices so pairs stay aligned."""
    t, t_prime = _check_pair(t, t_prime)
    idx = rng.integers(0, t.shape[0], size=t.shape[0])
    return t[idx], t_prime[idx]


def _as_generator(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def worst_q_from_predictions(t, t_prime, metric, n=DEFAULT_BOOTSTRAP_N, rng=None,
                             chunk_rows=1 << 22):
    """Worst metric value over ``n`` bootstrap resamples of paired rows.

    Row scores are precomputed once, so each resample reduces to a mean
    over drawn indices; index draws consume the RNG exactly as one
    ``rng.integers(0, rows, size=rows)`` call per resample would, which
    keeps results bit-identical to the literal resample-and-evaluate
    loop.  ``chunk_rows`` only caps memory.
    """
    if n < 1:
        raise ConfigError(f"bootstrap count must be at least 1, got {n}")
    t, t_prime = _check_pair(t, t_prime)
    rows = t.shape[0]
    if rows < 2:
        raise DataError(f"evaluation set needs at least 2 rows, got {rows}")
    rng = _as_generator(rng)
    scores = _row_scores(metric, t, t_prime)

    per_chunk = max(1, chunk_rows // rows)
    worst = None
    done = 0
    while done < n:
        k = min(per_chunk, n - done)
        draws = rng.integers(0, rows, size=(k, rows))
        values = scores[draws].mean(axis=1)
        candidate = metric.worst(values)
        if worst is None or metric.worse(candidate, worst):
            worst = candidate
        done += k
    return worst


def worst_q(x_eval, net_s, net_d, metric, n=DEFAULT_BOOTSTRAP_N, rng=None):
    """Pessimistic agreement between a trained network and its probed
    partner on a shared evaluation set.

    Both prediction matrices are computed once, inference mode, then
    bootstrapped ``n`` times.
    """
    t = net_s.forward(x_eval)
    t_prime = net_d.forward(x_eval)
    return worst_q_from_predictions(t, t_prime, metric, n=n, rng=rng)


def threshold_q0(mean_val_q, metric):
    """Equivalence threshold: midpoint between the achieved mean
    validation metric and the best value the metric can take."""
    return (float(mean_val_q) + metric.best_value) / 2.0


def evaluation_stream(master_seed, layer, i, j, m):
    """Independent RNG stream for one (layer, fold pair, truncation)
    evaluation, so results do not depend on execution order."""
    return np.random.default_rng(
        (int(master_seed), BOOTSTRAP_STREAM_TAG, int(layer), int(i), int(j), int(m))
    )


def build_pair_eval_set(data, plan, i, j):
    """Rows neither fold-i nor fold-j training runs both saw: the union
    of the two validation folds.  With two folds this is the whole
    dataset."""
    if plan.n != data.n:
        raise DataError(
            f"fold plan covers {plan.n} samples but dataset has {data.n}"
        )
    return data.subset(plan.pair_indices(i, j))


@dataclass(frozen=True)
class EquivalenceVerdict:
    """Outcome of one worst-case comparison against the threshold."""

    worst_q: float
    threshold: float
    equivalent: bool
    n_bootstrap: int
    fold_pair: tuple

    @classmethod
    def judge(cls, worst, threshold, metric, n_bootstrap, fold_pair):
        return cls(
            worst_q=float(worst),
            threshold=float(threshold),
            equivalent=not metric.worse(worst, threshold),
            n_bootstrap=int(n_bootstrap),
            fold_pair=tuple(fold_pair),
        )
