"""The standard coder: a mixture density network over coding time.

Maps a transformed change-feature vector (log1p counts, standardized
with statistics from the training split) through a ReLU stack to a
K-component Gaussian mixture over coding hours. The reported effort
number is the mean of the mixture truncated to [0, 1] hours.

Training minimizes the mixture negative log-likelihood with manual
backprop; targets stay untruncated, truncation is applied only at
prediction time.
"""
from __future__ import annotations

import base64
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .ioutil import DataError, derive_seed, read_json, write_json
from .tokenizer import ChangeFeatures

_LOG_2PI = math.log(2.0 * math.pi)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

DEFAULT_HIDDEN = (256, 64, 64, 64, 64)
DEFAULT_K = 20


@dataclass(frozen=True)
class MixturePrediction:
    """K-component Gaussian mixture over coding time in hours."""

    pi: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        k = self.pi.shape[0]
        if self.mu.shape != (k,) or self.sigma.shape != (k,):
            raise DataError("mixture arrays must share one length")
        if abs(float(self.pi.sum()) - 1.0) > 1e-9 or np.any(self.pi <= 0):
            raise DataError("mixture weights must be positive and sum to 1")
        if not (np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.sigma))):
            raise DataError("mixture parameters must be finite")
        if np.any(self.sigma <= 0):
            raise DataError("mixture scales must be positive")

    @property
    def k(self) -> int:
        return self.pi.shape[0]

    def mean(self) -> float:
        return float(np.dot(self.pi, self.mu))


@dataclass
class MdnModel:
    """Weights plus the feature-standardization statistics.

    layers[i] = (W, b) with W of shape (out, in); three linear heads of
    width K sit on the last hidden layer. sigma = sigma_floor +
    exp(raw) keeps every component proper.
    """

    layers: list[tuple[np.ndarray, np.ndarray]]
    w_pi: np.ndarray
    b_pi: np.ndarray
    w_mu: np.ndarray
    b_mu: np.ndarray
    w_sigma: np.ndarray
    b_sigma: np.ndarray
    feat_mean: np.ndarray
    feat_std: np.ndarray
    sigma_floor: float = 1e-3
    dictionary_hash: str | None = None
    training_log: list[dict] = field(default_factory=list)

    @property
    def input_width(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def k(self) -> int:
        return self.b_pi.shape[0]

    def standardize(self, X: np.ndarray) -> np.ndarray:
        return (X - self.feat_mean) / self.feat_std


def init_model(
    input_width: int,
    hidden: tuple[int, ...] = DEFAULT_HIDDEN,
    k: int = DEFAULT_K,
    sigma_floor: float = 1e-3,
    mu_bias_range: tuple[float, float] = (0.0, 2.0),
    seed: int = 0,
) -> MdnModel:
    """He-scaled random weights; mean-head biases spread over the
    plausible target range so components do not collapse at the start."""
    rng = np.random.default_rng(seed)
    layers = []
    fan_in = input_width
    for width in hidden:
        w = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(width, fan_in))
        layers.append((w, np.zeros(width)))
        fan_in = width
    head_scale = 1.0 / math.sqrt(fan_in)
    return MdnModel(
        layers=layers,
        w_pi=rng.normal(0.0, head_scale, size=(k, fan_in)),
        b_pi=np.zeros(k),
        w_mu=rng.normal(0.0, head_scale, size=(k, fan_in)),
        b_mu=np.linspace(mu_bias_range[0], mu_bias_range[1], k),
        w_sigma=rng.normal(0.0, head_scale, size=(k, fan_in)),
        b_sigma=np.zeros(k),
        feat_mean=np.zeros(input_width),
        feat_std=np.ones(input_width),
        sigma_floor=sigma_floor,
    )


# --- forward / loss / gradient ----------------------------------------------


def _forward_batch(model: MdnModel, X: np.ndarray, keep: bool = False):
    h = model.standardize(np.asarray(X, dtype=np.float64))
    acts = [h]
    for w, b in model.layers:
        h = np.maximum(h @ w.T + b, 0.0)
        if keep:
            acts.append(h)
    logits = h @ model.w_pi.T + model.b_pi
    logits -= logits.max(axis=1, keepdims=True)
    log_pi = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    mu = h @ model.w_mu.T + model.b_mu
    sraw = h @ model.w_sigma.T + model.b_sigma
    sigma = model.sigma_floor + np.exp(sraw)
    return log_pi, mu, sigma, acts


def mdn_forward_batch(model: MdnModel, X: np.ndarray):
    """(pi, mu, sigma) arrays of shape (N, K)."""
    if X.ndim != 2 or X.shape[1] != model.input_width:
        raise DataError(
            f"feature width {X.shape[-1] if X.ndim else 0} does not match "
            f"model input width {model.input_width}"
        )
    log_pi, mu, sigma, _ = _forward_batch(model, X)
    return np.exp(log_pi), mu, sigma


def mdn_forward(model: MdnModel, features: ChangeFeatures) -> MixturePrediction:
    x = features.transformed
    if x.shape[0] != model.input_width:
        raise DataError(
            f"feature width {x.shape[0]} does not match model input width "
            f"{model.input_width}"
        )
    pi, mu, sigma = mdn_forward_batch(model, x.reshape(1, -1))
    return MixturePrediction(pi=pi[0], mu=mu[0], sigma=sigma[0])


def mdn_loss(pred: MixturePrediction, y: float) -> float:
    """Negative log-likelihood of y under the mixture, max-shifted."""
    if not math.isfinite(y):
        raise DataError("target must be finite")
    z = (y - pred.mu) / pred.sigma
    comp = np.log(pred.pi) - 0.5 * z * z - np.log(pred.sigma) - 0.5 * _LOG_2PI
    m = comp.max()
    return float(-(m + np.log(np.exp(comp - m).sum())))


def _batch_nll_grad(model: MdnModel, X: np.ndarray, y: np.ndarray):
    """Mean NLL over the batch and gradients for every weight array."""
    n = X.shape[0]
    log_pi, mu, sigma, acts = _forward_batch(model, X, keep=True)
    h = acts[-1]
    z = (y[:, None] - mu) / sigma
    comp = log_pi - 0.5 * z * z - np.log(sigma) - 0.5 * _LOG_2PI
    m = comp.max(axis=1, keepdims=True)
    lse = m + np.log(np.exp(comp - m).sum(axis=1, keepdims=True))
    nll = float(-lse.mean())
    r = np.exp(comp - lse)  # responsibilities, rows sum to 1

    pi = np.exp(log_pi)
    d_logits = (pi - r) / n
    d_mu = -r * z / sigma / n
    d_sraw = (r * (1.0 - z * z) / sigma / n) * (sigma - model.sigma_floor)

    grads: dict[str, np.ndarray] = {
        "w_pi": d_logits.T @ h, "b_pi": d_logits.sum(axis=0),
        "w_mu": d_mu.T @ h, "b_mu": d_mu.sum(axis=0),
        "w_sigma": d_sraw.T @ h, "b_sigma": d_sraw.sum(axis=0),
    }
    dh = d_logits @ model.w_pi + d_mu @ model.w_mu + d_sraw @ model.w_sigma
    layer_grads: list[tuple[np.ndarray, np.ndarray]] = []
    for i in range(len(model.layers) - 1, -1, -1):
        w, _ = model.layers[i]
        dpre = dh * (acts[i + 1] > 0.0)
        layer_grads.append((dpre.T @ acts[i], dpre.sum(axis=0)))
        dh = dpre @ w
    layer_grads.reverse()
    return nll, layer_grads, grads


def mdn_nll(model: MdnModel, X: np.ndarray, y: np.ndarray) -> float:
    log_pi, mu, sigma, _ = _forward_batch(model, X)
    z = (y[:, None] - mu) / sigma
    comp = log_pi - 0.5 * z * z - np.log(sigma) - 0.5 * _LOG_2PI
    m = comp.max(axis=1, keepdims=True)
    lse = m + np.log(np.exp(comp - m).sum(axis=1, keepdims=True))
    return float(-lse.mean())


# --- training ----------------------------------------------------------------


@dataclass(frozen=True)
class MdnConfig:
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    k: int = DEFAULT_K
    sigma_floor: float = 1e-3
    learning_rate: float = 1e-3
    batch_size: int = 1024
    epochs: int = 20
    holdout_fraction: float = 0.1
    mu_bias_range: tuple[float, float] = (0.0, 2.0)
    seed: int = 0


def train_mdn(dataset, config: MdnConfig = MdnConfig(),
              dictionary_hash: str | None = None) -> MdnModel:
    """dataset: (ChangeFeatures, y_hours) pairs, or an (X, y) array
    pair with X already log1p-transformed."""
    X, y = _as_arrays(dataset)
    return train_mdn_arrays(X, y, config, dictionary_hash)


def _as_arrays(dataset):
    if isinstance(dataset, tuple) and len(dataset) == 2:
        X, y = dataset
        return np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.float64)
    pairs = list(dataset)
    if not pairs:
        raise DataError("training dataset is empty")
    X = np.stack([f.transformed for f, _ in pairs])
    y = np.array([t for _, t in pairs], dtype=np.float64)
    return X, y


def train_mdn_arrays(
    X: np.ndarray,
    y: np.ndarray,
    config: MdnConfig = MdnConfig(),
    dictionary_hash: str | None = None,
) -> MdnModel:
    if X.size == 0:
        raise DataError("training dataset is empty")
    if np.any(y < 0):
        raise DataError("coding-time targets must be nonnegative")
    n = X.shape[0]
    rng = np.random.default_rng(derive_seed(config.seed, "mdn-train"))
    perm = rng.permutation(n)
    n_hold = int(round(n * config.holdout_fraction))
    hold_idx, train_idx = perm[:n_hold], perm[n_hold:]
    if train_idx.size == 0:
        raise DataError("holdout fraction leaves no training data")
    X_tr, y_tr = X[train_idx], y[train_idx]
    X_ho, y_ho = X[hold_idx], y[hold_idx]

    model = init_model(
        input_width=X.shape[1],
        hidden=config.hidden,
        k=config.k,
        sigma_floor=config.sigma_floor,
        mu_bias_range=config.mu_bias_range,
        seed=derive_seed(config.seed, "mdn-init"),
    )
    # standardization statistics come from the training split only
    model.feat_mean = X_tr.mean(axis=0)
    std = X_tr.std(axis=0)
    model.feat_std = np.where(std < 1e-8, 1.0, std)
    model.dictionary_hash = dictionary_hash

    arrays = _param_arrays(model)
    mom1 = [np.zeros_like(a) for a in arrays]
    mom2 = [np.zeros_like(a) for a in arrays]
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    step = 0
    n_tr = X_tr.shape[0]
    for epoch in range(config.epochs):
        order = rng.permutation(n_tr)
        losses = []
        for lo in range(0, n_tr, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            nll, layer_grads, head_grads = _batch_nll_grad(model, X_tr[idx], y_tr[idx])
            losses.append(nll)
            step += 1
            grads = [g for pair in layer_grads for g in pair] + [
                head_grads[k] for k in ("w_pi", "b_pi", "w_mu", "b_mu",
                                        "w_sigma", "b_sigma")
            ]
            lr_t = config.learning_rate * math.sqrt(1.0 - beta2 ** step) / (
                1.0 - beta1 ** step
            )
            for a, g, m1, m2 in zip(arrays, grads, mom1, mom2):
                m1 *= beta1
                m1 += (1.0 - beta1) * g
                m2 *= beta2
                m2 += (1.0 - beta2) * g * g
                a -= lr_t * m1 / (np.sqrt(m2) + adam_eps)
        entry = {"epoch": epoch, "train_nll": float(np.mean(losses))}
        if X_ho.shape[0] > 0:
            entry["holdout_nll"] = mdn_nll(model, X_ho, y_ho)
        model.training_log.append(entry)
    return model


def _param_arrays(model: MdnModel) -> list[np.ndarray]:
    arrays: list[np.ndarray] = []
    for w, b in model.layers:
        arrays.extend([w, b])
    arrays.extend([model.w_pi, model.b_pi, model.w_mu, model.b_mu,
                   model.w_sigma, model.b_sigma])
    return arrays


def flatten_params(model: MdnModel) -> np.ndarray:
    return np.concatenate([a.ravel() for a in _param_arrays(model)])


def set_flat_params(model: MdnModel, theta: np.ndarray) -> None:
    arrays = _param_arrays(model)
    offset = 0
    for a in arrays:
        a[...] = theta[offset : offset + a.size].reshape(a.shape)
        offset += a.size
    if offset != theta.size:
        raise DataError("flat parameter vector has wrong length")


# --- truncated mixture mean ---------------------------------------------------


def _phi(x: np.ndarray) -> np.ndarray:
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def truncated_mean_batch(
    pi: np.ndarray, mu: np.ndarray, sigma: np.ndarray, a: float, b: float
) -> np.ndarray:
    """Row-wise mean of the mixture truncated to [a, b]; inputs (N, K)."""
    if not a < b:
        raise DataError("truncation needs a < b")
    with np.errstate(invalid="ignore", divide="ignore"):
        za = (a - mu) / sigma
        zb = (b - mu) / sigma
        mass = ndtr(zb) - ndtr(za)
        w = pi * mass
        total = w.sum(axis=1)
        if np.any(total < 1e-300):
            raise DataError("mixture has no probability mass inside the bounds")
        comp_mean = mu + sigma * (_phi(za) - _phi(zb)) / np.where(mass > 0, mass, 1.0)
    comp_mean = np.clip(comp_mean, a, b)
    comp_mean = np.where(mass > 0, comp_mean, 0.0)
    return (w * comp_mean).sum(axis=1) / total


def truncated_mixture_mean(pred: MixturePrediction, a: float, b: float) -> float:
    return float(
        truncated_mean_batch(
            pred.pi.reshape(1, -1), pred.mu.reshape(1, -1),
            pred.sigma.reshape(1, -1), a, b,
        )[0]
    )


def predict_sch(
    model: MdnModel, features: ChangeFeatures, bounds: tuple[float, float] = (0.0, 1.0)
) -> float:
    """Standard Coding Hours: truncated mean of the predicted mixture."""
    pred = mdn_forward(model, features)
    return truncated_mixture_mean(pred, bounds[0], bounds[1])


def predict_sch_batch(
    model: MdnModel, X: np.ndarray, bounds: tuple[float, float] = (0.0, 1.0)
) -> np.ndarray:
    pi, mu, sigma = mdn_forward_batch(model, X)
    return truncated_mean_batch(pi, mu, sigma, bounds[0], bounds[1])


# --- model files --------------------------------------------------------------


def _encode(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode()}


def _decode(rec: dict) -> np.ndarray:
    a = np.frombuffer(base64.b64decode(rec["data"]), dtype=np.float64)
    return a.reshape(rec["shape"]).copy()


def save_mdn_model(path: str, model: MdnModel) -> None:
    write_json(
        path,
        {
            "kind": "standard-coder-mdn",
            "hidden": [w.shape[0] for w, _ in model.layers],
            "k": model.k,
            "sigma_floor": model.sigma_floor,
            "dictionary_hash": model.dictionary_hash,
            "layers": [[_encode(w), _encode(b)] for w, b in model.layers],
            "heads": {
                "w_pi": _encode(model.w_pi), "b_pi": _encode(model.b_pi),
                "w_mu": _encode(model.w_mu), "b_mu": _encode(model.b_mu),
                "w_sigma": _encode(model.w_sigma), "b_sigma": _encode(model.b_sigma),
            },
            "feat_mean": _encode(model.feat_mean),
            "feat_std": _encode(model.feat_std),
            "training_log": model.training_log,
        },
    )


def load_mdn_model(path: str) -> MdnModel:
    raw = read_json(path)
    if raw.get("kind") != "standard-coder-mdn":
        raise DataError(f"{path} is not a standard-coder model file")
    heads = raw["heads"]
    return MdnModel(
        layers=[(_decode(w), _decode(b)) for w, b in raw["layers"]],
        w_pi=_decode(heads["w_pi"]), b_pi=_decode(heads["b_pi"]),
        w_mu=_decode(heads["w_mu"]), b_mu=_decode(heads["b_mu"]),
        w_sigma=_decode(heads["w_sigma"]), b_sigma=_decode(heads["b_sigma"]),
        feat_mean=_decode(raw["feat_mean"]),
        feat_std=_decode(raw["feat_std"]),
        sigma_floor=float(raw["sigma_floor"]),
        dictionary_hash=raw.get("dictionary_hash"),
        training_log=list(raw.get("training_log", [])),
    )
