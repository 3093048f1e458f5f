"""Adam optimizer, training loop, and finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Sequence

import numpy as np

from . import model
from .errors import DimensionError, InputError, NumericFault

BATCH_POLICIES = ("per-sample", "full-batch")


@dataclass
class TrainConfig:
    """Training configuration; defaults reproduce the reference experiment setup."""

    granularity: int = 24
    hidden_f: int = 128
    hidden_g: int = 64
    k: int = 4
    learning_rate: float = 0.0004
    epochs: int = 150
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    batch_policy: str = "per-sample"

    def validate(self) -> "TrainConfig":
        if self.learning_rate <= 0:
            raise InputError("learning_rate must be > 0")
        if self.epochs < 1:
            raise InputError("epochs must be >= 1")
        if self.k < 1:
            raise InputError("k must be >= 1")
        if self.granularity < 1:
            raise InputError("granularity must be >= 1")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise InputError("beta1 and beta2 must lie in [0, 1)")
        if self.epsilon <= 0:
            raise InputError("epsilon must be > 0")
        if self.batch_policy not in BATCH_POLICIES:
            raise InputError(f"batch_policy must be one of {BATCH_POLICIES}")
        if self.seed < 0:
            raise InputError("seed must be a non-negative integer")
        return self

    def to_json_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "TrainConfig":
        if not isinstance(doc, dict):
            raise InputError("training config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise InputError(f"unknown training config fields: {sorted(unknown)}")
        return cls(**doc).validate()


@dataclass
class AdamState:
    """First/second-moment accumulators shaped like the parameters, plus a step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0


def init_adam_state(params: model.ModelParams) -> AdamState:
    return AdamState(
        m={name: np.zeros_like(arr) for name, arr in params.arrays()},
        v={name: np.zeros_like(arr) for name, arr in params.arrays()},
        t=0,
    )


def adam_step(
    params: model.ModelParams,
    grads: dict[str, np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> tuple[model.ModelParams, AdamState]:
    """One Adam update; returns new params and state, inputs untouched.

    m <- b1*m + (1-b1)*g; v <- b2*v + (1-b2)*g^2; with bias-corrected
    m^ and v^, theta <- theta - lr * m^ / (sqrt(v^) + eps).
    """
    t = state.t + 1
    bc1 = 1.0 - config.beta1 ** t
    bc2 = 1.0 - config.beta2 ** t
    new_params: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for name, theta in params.arrays():
        g = grads.get(name)
        if g is None:
            raise DimensionError(f"gradients are missing entry {name!r}")
        g = np.asarray(g, dtype=np.float64)
        if g.shape != theta.shape:
            raise DimensionError(f"gradient {name} has shape {g.shape}, expected {theta.shape}")
        if not np.isfinite(g).all():
            raise NumericFault(f"non-finite gradient in {name}")
        m = config.beta1 * state.m[name] + (1.0 - config.beta1) * g
        v = config.beta2 * state.v[name] + (1.0 - config.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_params[name] = theta - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
        new_m[name] = m
        new_v[name] = v
    return model.ModelParams(**new_params), AdamState(m=new_m, v=new_v, t=t)


def _as_xy(sample) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(sample, "features") and hasattr(sample, "target"):
        return np.asarray(sample.features, dtype=np.float64), np.asarray(sample.target, dtype=np.float64)
    x, y = sample
    return np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)


@dataclass
class TrainResult:
    params: model.ModelParams
    loss_trace: list[float]


def train(dataset: Sequence, config: TrainConfig) -> TrainResult:
    """Train a fresh model on (features, target) samples.

    Deterministic given (dataset, config): parameters come from
    model.init_params(seed=config.seed) and the per-sample visiting order is
    shuffled by an independent PCG64 stream derived from the same seed.
    The loss trace holds one mean MSE per epoch; a non-finite loss aborts
    with NumericFault instead of training onward.
    """
    config.validate()
    samples = [_as_xy(s) for s in dataset]
    if not samples:
        raise InputError("training dataset is empty")
    for x, y in samples:
        model.validate_features(x)
        if y.shape != (config.granularity,):
            raise DimensionError(
                f"target has shape {y.shape}, expected ({config.granularity},)"
            )
        if not np.isfinite(y).all():
            raise InputError("target curve contains non-finite values")

    params = model.init_params(
        k=config.k,
        granularity=config.granularity,
        hidden_f=config.hidden_f,
        hidden_g=config.hidden_g,
        seed=config.seed,
    )
    state = init_adam_state(params)
    order_rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(entropy=config.seed, spawn_key=(1,)))
    )

    trace: list[float] = []
    n = len(samples)
    for epoch in range(config.epochs):
        if config.batch_policy == "per-sample":
            order = order_rng.permutation(n)
            losses = np.empty(n)
            for pos, idx in enumerate(order):
                x, y = samples[idx]
                loss = model.loss_value(params, x, y)
                if not np.isfinite(loss):
                    raise NumericFault(f"non-finite loss at epoch {epoch + 1}")
                grads = model.backward(params, x, y)
                params, state = adam_step(params, grads, state, config)
                losses[pos] = loss
            epoch_loss = float(losses.mean())
        else:  # full-batch: average gradients, one step per epoch
            total: dict[str, np.ndarray] | None = None
            losses = np.empty(n)
            for i, (x, y) in enumerate(samples):
                losses[i] = model.loss_value(params, x, y)
                grads = model.backward(params, x, y)
                if total is None:
                    total = grads
                else:
                    for name in total:
                        total[name] += grads[name]
            assert total is not None
            mean_grads = {name: arr / n for name, arr in total.items()}
            epoch_loss = float(losses.mean())
            if not np.isfinite(epoch_loss):
                raise NumericFault(f"non-finite loss at epoch {epoch + 1}")
            params, state = adam_step(params, mean_grads, state, config)
        trace.append(epoch_loss)
    return TrainResult(params=params, loss_trace=trace)


def grad_check(
    params: model.ModelParams,
    x: np.ndarray,
    target: np.ndarray,
    step: float = 1e-5,
    gradient_scale: float = 1.0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Central differences perturb each parameter in place by +/- step; the
    relative error per entry is |a - n| / max(|a|, |n|, 1e-8).
    ``gradient_scale`` deliberately mis-scales the analytic side and exists
    only so the checker's own sensitivity can be demonstrated.
    """
    x = model.validate_features(x)
    target = np.asarray(target, dtype=np.float64)
    analytic = model.backward(params, x, target)
    if gradient_scale != 1.0:
        analytic = {name: arr * gradient_scale for name, arr in analytic.items()}

    work = params.copy()
    max_rel = 0.0
    for name, arr in work.arrays():
        flat = arr.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp = model.loss_value(work, x, target)
            flat[i] = orig - step
            lm = model.loss_value(work, x, target)
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * step)
            a = a_flat[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if rel > max_rel:
                max_rel = rel
    return max_rel


def random_trial(
    rng: np.random.Generator,
    k: int = 4,
    granularity: int = 24,
    hidden_f: int = 128,
    hidden_g: int = 64,
) -> tuple[model.ModelParams, np.ndarray, np.ndarray]:
    """Random (params, features, target) triple for gradient verification."""
    params = model.init_params(
        k=k,
        granularity=granularity,
        hidden_f=hidden_f,
        hidden_g=hidden_g,
        seed=int(rng.integers(0, 2**63 - 1)),
    )
    params.latent_logits = rng.normal(0.0, 0.7, size=(k, granularity))
    params.f_b1 = rng.normal(0.0, 0.1, size=hidden_f)
    params.g_b1 = rng.normal(0.0, 0.1, size=hidden_g)
    params.g_b2 = rng.normal(0.0, 0.5, size=1)

    x = np.zeros(model.N_FEATURES)
    x[int(rng.integers(0, model.N_CATEGORY_SLOTS))] = 1.0
    x[model.N_CATEGORY_SLOTS:] = rng.normal(0.0, 1.0, size=model.N_SCALAR_FEATURES)
    target = rng.uniform(0.0, 1.5, size=granularity)
    return params, x, target


def loss_trace_csv(trace: Iterable[float]) -> str:
    """Loss trace as ``epoch,mean_mse`` CSV text (full float precision)."""
    lines = ["epoch,mean_mse"]
    for i, loss in enumerate(trace, start=1):
        lines.append(f"{i},{loss!r}")
    return "\n".join(lines) + "\n"
