"""Latent-profile charging load model.

A location feature vector (12-slot one-hot area category followed by three
standardized scalars) is mapped to a predicted daily load curve in two parts:

* a mixing head (dense 15->hidden_f, tanh, dense hidden_f->K) whose softmax
  output convexly mixes K learnable latent profiles, each profile being a
  softmax over G hourly bins, giving the load *shape* on the simplex;
* a scale head (dense 15->hidden_g, tanh, dense hidden_g->1) whose softplus
  output is the positive daily energy scale.

The predicted load is ``peak_scale * shape``. Everything is float64 numpy
with hand-derived analytic gradients so the whole parameter vector can be
verified against central finite differences.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InputError, NumericFault

N_CATEGORY_SLOTS = 12
N_SCALAR_FEATURES = 3
N_FEATURES = N_CATEGORY_SLOTS + N_SCALAR_FEATURES

MODEL_JSON_VERSION = 1

#: Field names of ModelParams arrays, in a fixed canonical order.
PARAM_FIELDS = (
    "f_w1", "f_b1", "f_w2", "f_b2",
    "g_w1", "g_b1", "g_w2", "g_b2",
    "latent_logits",
)


@dataclass
class ModelParams:
    """All trainable arrays of the model.

    Shapes (F = number of input features, K = latent profile count,
    G = profile granularity):
      f_w1 (hidden_f, F), f_b1 (hidden_f,), f_w2 (K, hidden_f), f_b2 (K,)
      g_w1 (hidden_g, F), g_b1 (hidden_g,), g_w2 (1, hidden_g), g_b2 (1,)
      latent_logits (K, G)
    """

    f_w1: np.ndarray
    f_b1: np.ndarray
    f_w2: np.ndarray
    f_b2: np.ndarray
    g_w1: np.ndarray
    g_b1: np.ndarray
    g_w2: np.ndarray
    g_b2: np.ndarray
    latent_logits: np.ndarray

    @property
    def k(self) -> int:
        return self.latent_logits.shape[0]

    @property
    def granularity(self) -> int:
        return self.latent_logits.shape[1]

    @property
    def hidden_f(self) -> int:
        return self.f_w1.shape[0]

    @property
    def hidden_g(self) -> int:
        return self.g_w1.shape[0]

    @property
    def n_features(self) -> int:
        return self.f_w1.shape[1]

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        return [(name, getattr(self, name)) for name in PARAM_FIELDS]

    def n_parameters(self) -> int:
        return sum(arr.size for _, arr in self.arrays())

    def copy(self) -> "ModelParams":
        return ModelParams(**{name: arr.copy() for name, arr in self.arrays()})


def expected_parameter_count(n_features: int, hidden_f: int, hidden_g: int, k: int, granularity: int) -> int:
    """Closed-form parameter count for the architecture dimensions."""
    f = hidden_f * n_features + hidden_f + k * hidden_f + k
    g = hidden_g * n_features + hidden_g + hidden_g + 1
    return f + g + k * granularity


def init_params(
    k: int = 4,
    granularity: int = 24,
    hidden_f: int = 128,
    hidden_g: int = 64,
    n_features: int = N_FEATURES,
    seed: int = 0,
) -> ModelParams:
    """Deterministically initialize parameters from a seed.

    Weights are uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)); biases
    and latent logits start at zero (all latent profiles uniform). The RNG is
    numpy's PCG64, so equal seeds give bitwise-identical parameters.
    """
    if k < 1 or granularity < 1 or hidden_f < 1 or hidden_g < 1:
        raise InputError("k, granularity, and hidden sizes must all be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))

    def glorot(fan_out: int, fan_in: int) -> np.ndarray:
        a = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-a, a, size=(fan_out, fan_in))

    return ModelParams(
        f_w1=glorot(hidden_f, n_features),
        f_b1=np.zeros(hidden_f),
        f_w2=glorot(k, hidden_f),
        f_b2=np.zeros(k),
        g_w1=glorot(hidden_g, n_features),
        g_b1=np.zeros(hidden_g),
        g_w2=glorot(1, hidden_g),
        g_b2=np.zeros(1),
        latent_logits=np.zeros((k, granularity)),
    )


def softmax(v: np.ndarray) -> np.ndarray:
    """Numerically stable softmax of a vector."""
    shifted = v - np.max(v)
    e = np.exp(shifted)
    return e / e.sum()


def softmax_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a matrix."""
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softplus(x: float) -> float:
    """log(1 + exp(x)) without overflow."""
    return float(np.logaddexp(0.0, x))


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


def validate_features(x: np.ndarray) -> np.ndarray:
    """Check the feature-vector invariants and return a float64 view.

    Slots 0..11 must one-hot encode the area category (exactly one slot equals
    1, the rest equal 0), and every entry must be finite.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (N_FEATURES,):
        raise DimensionError(f"feature vector must have length {N_FEATURES}, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise InputError("feature vector contains non-finite values")
    cats = x[:N_CATEGORY_SLOTS]
    if np.count_nonzero(cats == 1.0) != 1 or np.count_nonzero(cats) != 1:
        raise InputError("feature slots 0-11 must one-hot encode the area category")
    return x


def latent_distributions(latent_logits: np.ndarray) -> np.ndarray:
    """Latent profile bank as probability distributions (row softmax)."""
    return softmax_rows(np.asarray(latent_logits, dtype=np.float64))


def mix_shapes(weights: np.ndarray, distributions: np.ndarray) -> np.ndarray:
    """Convex mixture of latent rows: weights @ distributions."""
    weights = np.asarray(weights, dtype=np.float64)
    distributions = np.asarray(distributions, dtype=np.float64)
    if weights.shape[0] != distributions.shape[0]:
        raise DimensionError(
            f"{weights.shape[0]} mixture weights vs {distributions.shape[0]} latent rows"
        )
    return weights @ distributions


@dataclass
class PredictedCurve:
    """Model output: positive daily-energy scale, simplex shape, and their product."""

    peak_scale: float
    shape: np.ndarray
    load: np.ndarray
    mixture: np.ndarray


def _forward_parts(params: ModelParams, x: np.ndarray) -> dict:
    """Forward pass keeping every intermediate needed by backward()."""
    a_f = params.f_w1 @ x + params.f_b1
    h_f = np.tanh(a_f)
    z = params.f_w2 @ h_f + params.f_b2
    w = softmax(z)
    bank = softmax_rows(params.latent_logits)
    shape = w @ bank

    a_g = params.g_w1 @ x + params.g_b1
    h_g = np.tanh(a_g)
    r = float(params.g_w2[0] @ h_g + params.g_b2[0])
    peak = softplus(r)
    load = peak * shape
    return {
        "x": x, "h_f": h_f, "z": z, "w": w, "bank": bank, "shape": shape,
        "h_g": h_g, "r": r, "peak": peak, "load": load,
    }


_CHECKED_LAYERS = (
    ("h_f", "f_hidden"),
    ("z", "f_logits"),
    ("w", "mixture_weights"),
    ("bank", "latent_distributions"),
    ("h_g", "g_hidden"),
    ("r", "g_raw"),
    ("peak", "peak_scale"),
    ("shape", "shape"),
    ("load", "load"),
)


def forward(params: ModelParams, x: np.ndarray, validate: bool = True) -> PredictedCurve:
    """Predict the load curve for one feature vector.

    Raises NumericFault naming the first layer that produced a non-finite
    value, and InputError if the feature invariants are violated.
    """
    if validate:
        x = validate_features(x)
    else:
        x = np.asarray(x, dtype=np.float64)
    parts = _forward_parts(params, x)
    for key, layer in _CHECKED_LAYERS:
        if not np.all(np.isfinite(parts[key])):
            raise NumericFault(f"non-finite value in layer {layer}")
    return PredictedCurve(
        peak_scale=parts["peak"],
        shape=parts["shape"],
        load=parts["load"],
        mixture=parts["w"],
    )


def loss_value(params: ModelParams, x: np.ndarray, target: np.ndarray) -> float:
    """Mean squared error of the predicted load against a target curve.

    Lean path (no per-layer checks); used heavily by finite differencing.
    """
    parts = _forward_parts(params, x)
    d = parts["load"] - target
    return float(np.mean(d * d))


def mse_loss(pred: PredictedCurve, target: np.ndarray) -> float:
    """Mean over bins of squared load error (reduction = mean)."""
    target = np.asarray(target, dtype=np.float64)
    if pred.load.shape != target.shape:
        raise DimensionError(f"prediction has {pred.load.shape[0]} bins, target {target.shape[0]}")
    d = pred.load - target
    return float(np.mean(d * d))


def backward(params: ModelParams, x: np.ndarray, target: np.ndarray) -> dict[str, np.ndarray]:
    """Analytic gradient of mse_loss(forward(params, x), target) in every parameter.

    Chain rule through MSE, the peak softplus, the convex mixture, the mixing
    softmax, both tanh MLPs, and the per-row latent softmax.
    """
    x = np.asarray(x, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    p = _forward_parts(params, x)
    g = p["load"].shape[0]
    if target.shape != (g,):
        raise DimensionError(f"prediction has {g} bins, target {target.shape}")

    e = (2.0 / g) * (p["load"] - target)          # dL/dload
    d_peak = float(e @ p["shape"])                # dL/dpeak
    d_shape = p["peak"] * e                       # dL/dshape

    # Scale head: peak = softplus(r), r = g_w2 @ h_g + g_b2.
    d_r = d_peak * sigmoid(p["r"])
    d_g_w2 = (d_r * p["h_g"])[np.newaxis, :]
    d_g_b2 = np.array([d_r])
    d_h_g = d_r * params.g_w2[0]
    d_a_g = d_h_g * (1.0 - p["h_g"] ** 2)
    d_g_w1 = np.outer(d_a_g, x)
    d_g_b1 = d_a_g

    # Mixture: shape = w @ bank.
    d_w = p["bank"] @ d_shape                     # (K,)
    d_bank = np.outer(p["w"], d_shape)            # (K, G)

    # Mixing softmax: w = softmax(z).
    w = p["w"]
    d_z = w * (d_w - float(w @ d_w))
    d_f_w2 = np.outer(d_z, p["h_f"])
    d_f_b2 = d_z
    d_h_f = params.f_w2.T @ d_z
    d_a_f = d_h_f * (1.0 - p["h_f"] ** 2)
    d_f_w1 = np.outer(d_a_f, x)
    d_f_b1 = d_a_f

    # Per-row latent softmax: bank[k] = softmax(latent_logits[k]).
    bank = p["bank"]
    row_dot = np.sum(d_bank * bank, axis=1, keepdims=True)
    d_latent = bank * (d_bank - row_dot)

    return {
        "f_w1": d_f_w1, "f_b1": d_f_b1, "f_w2": d_f_w2, "f_b2": d_f_b2,
        "g_w1": d_g_w1, "g_b1": d_g_b1, "g_w2": d_g_w2, "g_b2": d_g_b2,
        "latent_logits": d_latent,
    }


@dataclass
class MatchResult:
    """Assignment of latent rows to reference shapes."""

    permutation: tuple[int, ...]
    similarities: tuple[float, ...]

    @property
    def mean_similarity(self) -> float:
        return float(np.mean(self.similarities))


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def match_latents(distributions: np.ndarray, archetypes: np.ndarray) -> MatchResult:
    """Best assignment of latent rows to reference shapes by mean cosine similarity.

    Exhaustive search over all K! permutations; `permutation[i]` is the latent
    row paired with reference row i. Exact ties keep the lexicographically
    smallest permutation.
    """
    distributions = np.asarray(distributions, dtype=np.float64)
    archetypes = np.asarray(archetypes, dtype=np.float64)
    if distributions.shape != archetypes.shape:
        raise DimensionError(
            f"latent bank shape {distributions.shape} vs reference shape {archetypes.shape}"
        )
    k = distributions.shape[0]
    sim = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            sim[i, j] = cosine_similarity(archetypes[i], distributions[j])

    best_perm: tuple[int, ...] | None = None
    best_mean = -np.inf
    for perm in itertools.permutations(range(k)):
        mean = float(np.mean([sim[i, perm[i]] for i in range(k)]))
        if mean > best_mean:
            best_mean = mean
            best_perm = perm
    assert best_perm is not None
    return MatchResult(
        permutation=best_perm,
        similarities=tuple(float(sim[i, best_perm[i]]) for i in range(k)),
    )


def params_to_json_dict(params: ModelParams) -> dict:
    """Versioned JSON document for the parameters (row-major nested lists)."""
    return {
        "version": MODEL_JSON_VERSION,
        "granularity": params.granularity,
        "k": params.k,
        "f": {
            "w1": params.f_w1.tolist(),
            "b1": params.f_b1.tolist(),
            "w2": params.f_w2.tolist(),
            "b2": params.f_b2.tolist(),
        },
        "g": {
            "w1": params.g_w1.tolist(),
            "b1": params.g_b1.tolist(),
            "w2": params.g_w2.tolist(),
            "b2": params.g_b2.tolist(),
        },
        "latent_logits": params.latent_logits.tolist(),
    }


def params_from_json_dict(doc: dict) -> ModelParams:
    """Parse and validate a parameter document produced by params_to_json_dict."""
    if not isinstance(doc, dict):
        raise InputError("model document must be a JSON object")
    version = doc.get("version")
    if version != MODEL_JSON_VERSION:
        raise InputError(f"unsupported model document version {version!r}")
    try:
        params = ModelParams(
            f_w1=np.asarray(doc["f"]["w1"], dtype=np.float64),
            f_b1=np.asarray(doc["f"]["b1"], dtype=np.float64),
            f_w2=np.asarray(doc["f"]["w2"], dtype=np.float64),
            f_b2=np.asarray(doc["f"]["b2"], dtype=np.float64),
            g_w1=np.asarray(doc["g"]["w1"], dtype=np.float64),
            g_b1=np.asarray(doc["g"]["b1"], dtype=np.float64),
            g_w2=np.asarray(doc["g"]["w2"], dtype=np.float64),
            g_b2=np.asarray(doc["g"]["b2"], dtype=np.float64),
            latent_logits=np.asarray(doc["latent_logits"], dtype=np.float64),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed model document: {exc}") from exc

    k, g = params.latent_logits.shape if params.latent_logits.ndim == 2 else (0, 0)
    if doc.get("k") != k or doc.get("granularity") != g:
        raise InputError("model document k/granularity do not match the latent bank")
    if params.f_w2.shape[0] != k or params.f_b2.shape[0] != k:
        raise DimensionError("mixing head output size does not match latent profile count")
    if params.f_w1.shape[1] != params.g_w1.shape[1]:
        raise DimensionError("mixing and scale heads disagree on the input width")
    for name, arr in params.arrays():
        if not np.isfinite(arr).all():
            raise InputError(f"model document contains non-finite values in {name}")
    return params
