"""Gradient training for the numpy networks.

One optimizer (Adam), two losses, and a phased schedule: each phase
runs at a fixed learning rate until the inference-mode validation loss
stops improving, then the next (smaller) rate takes over with the same
optimizer state.  The best weights seen anywhere are restored at the
end, so a finished run always carries its lowest-validation-loss state.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError, TrainError

CROSS_ENTROPY_CLIP = 1e-12


def cross_entropy(pred, target):
    """Mean categorical cross-entropy; predictions clipped away from 0."""
    p = np.clip(pred, CROSS_ENTROPY_CLIP, 1.0)
    return float(-np.sum(target * np.log(p)) / pred.shape[0])


def cross_entropy_grad(pred, target):
    p = np.clip(pred, CROSS_ENTROPY_CLIP, 1.0)
    return -(target / p) / pred.shape[0]


def mse(pred, target):
    """Mean squared error over all entries (equals the mean of row means)."""
    return float(np.mean((pred - target) ** 2))


def mse_grad(pred, target):
    return 2.0 * (pred - target) / pred.size


LOSSES = {
    "cross_entropy": (cross_entropy, cross_entropy_grad),
    "mse": (mse, mse_grad),
}


def get_loss(name):
    try:
        return LOSSES[name]
    except KeyError:
        raise ConfigError(
            f"unknown loss {name!r}; expected one of {sorted(LOSSES)}"
        ) from None


def loss_and_grads(net, x, y, loss="cross_entropy"):
    """Training-mode loss and parameter gradients in parameters() order."""
    loss_fn, grad_fn = get_loss(loss)
    out, tapes = net.forward_train(x)
    value = loss_fn(out, y)
    grads = net.backward(grad_fn(out, y), tapes)
    return value, grads


def evaluate_loss(net, x, y, loss="cross_entropy"):
    """Inference-mode loss; this is the quantity early stopping watches."""
    loss_fn, _ = get_loss(loss)
    return loss_fn(net.forward(x), y)


class Adam:
    """Adam with in-place updates; ``lr`` may be changed between steps."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-7):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.epsilon = float(epsilon)
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads):
        if len(grads) != len(self.params):
            raise ShapeError(
                f"got {len(grads)} gradients for {len(self.params)} parameters"
            )
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            mhat = m / correction1
            vhat = v / correction2
            p -= self.lr * mhat / (np.sqrt(vhat) + self.epsilon)


@dataclass(frozen=True)
class TrainSchedule:
    """Learning-rate phases plus the shared stopping rules.

    ``patience`` is the number of epochs without validation improvement
    tolerated inside one phase before moving to the next rate (or, in
    the last phase, stopping).  ``max_epochs`` caps the total across
    all phases.
    """

    learning_rates: tuple = (1e-3,)
    patience: int = 3
    max_epochs: int = 1000
    batch_size: int = 32
    loss: str = "cross_entropy"
    min_delta: float = 0.0

    def __post_init__(self):
        rates = tuple(float(r) for r in self.learning_rates)
        object.__setattr__(self, "learning_rates", rates)
        if not rates or any(r <= 0 for r in rates):
            raise ConfigError(f"learning rates must be positive, got {rates}")
        if any(a < b for a, b in zip(rates, rates[1:])):
            raise ConfigError(f"learning rates must be non-increasing, got {rates}")
        if self.loss not in LOSSES:
            raise ConfigError(
                f"unknown loss {self.loss!r}; expected one of {sorted(LOSSES)}"
            )
        if self.patience < 1:
            raise ConfigError(f"patience must be at least 1, got {self.patience}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be at least 1, got {self.max_epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.min_delta < 0:
            raise ConfigError(f"min_delta must be non-negative, got {self.min_delta}")

    @classmethod
    def single(cls, lr=1e-3, patience=3, **kwargs):
        return cls(learning_rates=(lr,), patience=patience, **kwargs)

    @classmethod
    def multi_rate(cls, start=1e-3, stop=1e-6, factor=0.1, patience=10, **kwargs):
        """Geometric ladder of rates from ``start`` down to ``stop``."""
        if not 0 < factor < 1:
            raise ConfigError(f"factor must be in (0, 1), got {factor}")
        rates = []
        lr = float(start)
        while lr >= stop * (1.0 - 1e-12):
            rates.append(lr)
            lr *= factor
        if not rates:
            raise ConfigError(f"empty rate ladder from {start} to {stop}")
        return cls(learning_rates=tuple(rates), patience=patience, **kwargs)

    def to_dict(self):
        return {
            "learning_rates": list(self.learning_rates),
            "patience": self.patience,
            "max_epochs": self.max_epochs,
            "batch_size": self.batch_size,
            "loss": self.loss,
            "min_delta": self.min_delta,
        }

    @classmethod
    def from_dict(cls, data):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown schedule fields: {sorted(extra)}")
        return cls(**data)


@dataclass
class TrainResult:
    """What a finished run looked like, epoch by epoch."""

    history: list = field(default_factory=list)
    best_val_loss: float = float("inf")
    best_epoch: int = -1
    epochs: int = 0
    stopped_early: bool = False


def train(net, x_train, y_train, x_val, y_val, schedule=None, seed=0):
    """Fit ``net`` in place and leave it holding its best-validation weights.

    Each learning-rate phase runs until the validation loss stalls for
    ``patience`` epochs, then the best weights seen so far are restored
    before the next (smaller) rate starts.  Epoch shuffles derive from
    ``(seed, epoch)`` with a global epoch counter across phases, so a
    run is reproducible regardless of where phase boundaries fall.
    Raises TrainError (with the epoch) if the loss goes non-finite.
    """
    if schedule is None:
        schedule = TrainSchedule()
    x_train = np.asarray(x_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.float64)
    if x_train.shape[0] != y_train.shape[0]:
        raise ShapeError(
            f"{x_train.shape[0]} training inputs but {y_train.shape[0]} targets"
        )
    if x_train.shape[0] == 0:
        raise ShapeError("training set is empty")

    loss = schedule.loss
    loss_fn, grad_fn = get_loss(loss)
    optimizer = Adam(net.parameters(), lr=schedule.learning_rates[0])
    n = x_train.shape[0]
    seed_base = tuple(seed) if isinstance(seed, (tuple, list)) else (seed,)

    result = TrainResult()
    best_state = net.get_state()
    result.best_val_loss = evaluate_loss(net, x_val, y_val, loss)
    result.best_epoch = -1

    epoch = 0
    for lr in schedule.learning_rates:
        optimizer.lr = lr
        bad_epochs = 0
        while bad_epochs < schedule.patience and epoch < schedule.max_epochs:
            perm = np.random.default_rng((*seed_base, epoch)).permutation(n)
            batch_losses = []
            for start in range(0, n, schedule.batch_size):
                idx = perm[start : start + schedule.batch_size]
                out, tapes = net.forward_train(x_train[idx])
                value = loss_fn(out, y_train[idx])
                if not np.isfinite(value):
                    raise TrainError(
                        f"training loss became non-finite at epoch {epoch}",
                        epoch=epoch,
                    )
                optimizer.step(net.backward(grad_fn(out, y_train[idx]), tapes))
                batch_losses.append(value)
            val_loss = evaluate_loss(net, x_val, y_val, loss)
            if not np.isfinite(val_loss):
                raise TrainError(
                    f"validation loss became non-finite at epoch {epoch}",
                    epoch=epoch,
                )
            result.history.append(
                {
                    "epoch": epoch,
                    "lr": lr,
                    "train_loss": float(np.mean(batch_losses)),
                    "val_loss": val_loss,
                }
            )
            if val_loss < result.best_val_loss - schedule.min_delta:
                result.best_val_loss = val_loss
                result.best_epoch = epoch
                best_state = net.get_state()
                bad_epochs = 0
            else:
                bad_epochs += 1
            epoch += 1
        # Next phase (and the caller) start from the best weights so far.
        net.set_state(best_state)
        if epoch >= schedule.max_epochs:
            break
    else:
        result.stopped_early = True

    result.epochs = epoch
    return result
