"""From-scratch feedforward network for the outflow-pressure time curve.

Layout is [1, H, ..., H, 1]: scalar time in, scalar pressure out.  Each
neuron applies the affine propagation u = W y + b followed by the activation;
the output layer is linear.  Training minimizes the mean squared error with
full-batch gradient descent,

    w <- w - eta dL/dw,     b <- b - eta dL/db,

the gradients coming from reverse-mode accumulation of the layer chain.
Inputs and targets are min-max normalized to [0, 1]; predictions are mapped
back before they leave the model.

Default hyperparameters (150 neurons per layer, two hidden layers, softplus,
50000 epochs, learning rate 5e-6) reproduce the reference setup; desk-scale
runs override them in their config and report the values actually used.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FormatError, ShapeError, TrainingError

REFERENCE_NN_DEFAULTS = {
    "hidden_neurons": 150,
    "hidden_layers": 2,
    "activation": "softplus",
    "epochs": 50000,
    "learning_rate": 5e-6,
    "train_fraction": 0.8,
}


def _softplus(u):
    return np.logaddexp(0.0, u)


def _softplus_d(u):
    # stable sigmoid: exp only ever sees non-positive arguments
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    e = np.exp(u[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _tanh_d(u):
    return 1.0 / np.cosh(np.clip(u, -300.0, 300.0)) ** 2


def _relu(u):
    return np.maximum(u, 0.0)


def _relu_d(u):
    return (u > 0).astype(np.float64)


def _identity(u):
    return u


def _one(u):
    return np.ones_like(u)


ACTIVATIONS = {
    "softplus": (_softplus, _softplus_d),
    "tanh": (np.tanh, _tanh_d),
    "relu": (_relu, _relu_d),
    "identity": (_identity, _one),
}


class ExtrapolationWarning(UserWarning):
    """Raised when the model is queried well outside its training range."""


@dataclass(frozen=True)
class NNModel:
    layer_sizes: tuple
    weights: tuple
    biases: tuple
    activation: str
    x_range: tuple = (0.0, 1.0)
    y_range: tuple = (0.0, 1.0)

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        sizes = self.layer_sizes
        if len(sizes) < 2:
            raise ConfigurationError("need at least input and output layers")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ShapeError("one weight/bias pair per layer transition required")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[l + 1], sizes[l]) or b.shape != (sizes[l + 1],):
                raise ShapeError(f"layer {l}: weight {w.shape} / bias {b.shape} "
                                 f"do not match sizes {sizes[l]}->{sizes[l + 1]}")

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


def _span(lo: float, hi: float) -> float:
    return hi - lo if hi > lo else 1.0


def init_model(hidden_neurons: int = 150, hidden_layers: int = 2,
               activation: str = "softplus", seed: int = 0,
               x_range=(0.0, 1.0), y_range=(0.0, 1.0)) -> NNModel:
    """Seeded Glorot-uniform initialization of a [1, H, ..., H, 1] network."""
    sizes = (1,) + (hidden_neurons,) * hidden_layers + (1,)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for l in range(len(sizes) - 1):
        bound = np.sqrt(6.0 / (sizes[l] + sizes[l + 1]))
        weights.append(rng.uniform(-bound, bound, size=(sizes[l + 1], sizes[l])))
        biases.append(np.zeros(sizes[l + 1]))
    return NNModel(sizes, tuple(weights), tuple(biases), activation,
                   tuple(map(float, x_range)), tuple(map(float, y_range)))


def _forward_normalized(model: NNModel, xn: np.ndarray):
    """All pre-activations and layer outputs for a normalized input row."""
    act, _ = ACTIVATIONS[model.activation]
    y = xn[None, :]
    pre, post = [], [y]
    last = len(model.weights) - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        u = w @ y + b[:, None]
        pre.append(u)
        y = u if l == last else act(u)
        post.append(y)
    return pre, post


def nn_forward(model: NNModel, x) -> np.ndarray | float:
    """De-normalized prediction for raw input(s) x."""
    xa = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if not np.all(np.isfinite(xa)):
        raise ShapeError("non-finite network input")
    xlo, xhi = model.x_range
    xn = (xa - xlo) / _span(xlo, xhi)
    _, post = _forward_normalized(model, xn)
    ylo, yhi = model.y_range
    out = post[-1][0] * _span(ylo, yhi) + ylo
    return float(out[0]) if np.isscalar(x) or np.ndim(x) == 0 else out


def nn_backprop(model: NNModel, x, y):
    """Mean-squared-error gradients for a raw-sample batch.

    Returns (grad_w, grad_b, mse); the loss and its gradients live in the
    normalized space the training loop works in.
    """
    xa = np.atleast_1d(np.asarray(x, dtype=np.float64))
    ya = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if xa.size == 0 or xa.shape != ya.shape:
        raise ShapeError("backprop needs a nonempty batch of matching x/y")
    xlo, xhi = model.x_range
    ylo, yhi = model.y_range
    xn = (xa - xlo) / _span(xlo, xhi)
    yn = (ya - ylo) / _span(ylo, yhi)

    _, dact = ACTIVATIONS[model.activation]
    pre, post = _forward_normalized(model, xn)
    m = xa.size
    n_layers = len(model.weights)

    grad_w = [None] * n_layers
    grad_b = [None] * n_layers
    resid = post[-1][0] - yn
    mse = float(np.mean(resid**2))
    delta = (2.0 / m) * resid[None, :]                     # dL/du at the linear output
    for l in range(n_layers - 1, -1, -1):
        grad_w[l] = delta @ post[l].T
        grad_b[l] = delta.sum(axis=1)
        if l > 0:
            delta = (model.weights[l].T @ delta) * dact(pre[l - 1])
    return grad_w, grad_b, mse


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = REFERENCE_NN_DEFAULTS["epochs"]
    learning_rate: float = REFERENCE_NN_DEFAULTS["learning_rate"]
    train_fraction: float = REFERENCE_NN_DEFAULTS["train_fraction"]
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning rate must be positive")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigurationError("train fraction must be in (0, 1)")


def nn_train(model: NNModel, t, p, cfg: TrainConfig):
    """Full-batch gradient descent on (t, p) samples.

    Normalization ranges are fitted to the dataset first.  Returns the
    trained model and the loss history array with columns
    (epoch, train_mse, test_mse); MSE values are in normalized units.
    """
    ta = np.asarray(t, dtype=np.float64).ravel()
    pa = np.asarray(p, dtype=np.float64).ravel()
    if ta.size < 2 or ta.size != pa.size:
        raise ShapeError("training needs >= 2 aligned (t, p) samples")

    model = replace(model,
                    x_range=(float(ta.min()), float(ta.max())),
                    y_range=(float(pa.min()), float(pa.max())))

    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(ta.size)
    n_train = max(1, int(round(cfg.train_fraction * ta.size)))
    if n_train == ta.size:
        n_train = ta.size - 1
    idx_train, idx_test = perm[:n_train], perm[n_train:]
    t_train, p_train = ta[idx_train], pa[idx_train]
    t_test, p_test = ta[idx_test], pa[idx_test]

    weights = [w.copy() for w in model.weights]
    biases = [b.copy() for b in model.biases]
    history = np.empty((cfg.epochs, 3))
    eta = cfg.learning_rate

    def norm_mse(current, xa, ya):
        xlo, xhi = current.x_range
        ylo, yhi = current.y_range
        xn = (xa - xlo) / _span(xlo, xhi)
        yn = (ya - ylo) / _span(ylo, yhi)
        _, post = _forward_normalized(current, xn)
        return float(np.mean((post[-1][0] - yn) ** 2))

    for epoch in range(cfg.epochs):
        current = replace(model, weights=tuple(weights), biases=tuple(biases))
        gw, gb, train_mse = nn_backprop(current, t_train, p_train)
        if not np.isfinite(train_mse):
            raise TrainingError(
                f"training diverged at epoch {epoch} (loss={train_mse}); "
                f"reduce the learning rate (eta={eta})"
            )
        history[epoch] = (epoch, train_mse, norm_mse(current, t_test, p_test))
        for l in range(len(weights)):
            weights[l] -= eta * gw[l]
            biases[l] -= eta * gb[l]
    trained = replace(model, weights=tuple(w.copy() for w in weights),
                      biases=tuple(b.copy() for b in biases))
    return trained, history


def predict_outflow(model: NNModel, t) -> np.ndarray | float:
    """Evaluate the trained pressure curve at arbitrary times.

    Warns (ExtrapolationWarning) when queried more than 10% of the training
    span outside the fitted range.
    """
    ta = np.atleast_1d(np.asarray(t, dtype=np.float64))
    xlo, xhi = model.x_range
    margin = 0.1 * _span(xlo, xhi)
    if np.any(ta < xlo - margin) or np.any(ta > xhi + margin):
        warnings.warn(
            f"query outside [{xlo - margin:.6g}, {xhi + margin:.6g}] extrapolates the "
            f"outflow-pressure model", ExtrapolationWarning, stacklevel=2)
    return nn_forward(model, t)


# -- persistence: decimal strings for bit-exact round trips --------------------

def save_model(model: NNModel, path) -> None:
    doc = {
        "format": "romkit-nn-1",
        "layer_sizes": list(model.layer_sizes),
        "activation": model.activation,
        "x_range": [repr(v) for v in model.x_range],
        "y_range": [repr(v) for v in model.y_range],
        "weights": [[[repr(float(x)) for x in row] for row in w] for w in model.weights],
        "biases": [[repr(float(x)) for x in b] for b in model.biases],
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_model(path) -> NNModel:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise FormatError(f"no model file at {path}")
    if doc.get("format") != "romkit-nn-1":
        raise FormatError(f"unsupported model format {doc.get('format')!r}")
    weights = tuple(np.array([[float(x) for x in row] for row in w]) for w in doc["weights"])
    biases = tuple(np.array([float(x) for x in b]) for b in doc["biases"])
    return NNModel(tuple(doc["layer_sizes"]), weights, biases, doc["activation"],
                   tuple(float(v) for v in doc["x_range"]),
                   tuple(float(v) for v in doc["y_range"]))


def save_loss_history(path, history: np.ndarray) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_mse", "test_mse"])
        for epoch, train_mse, test_mse in history:
            writer.writerow([int(epoch), repr(float(train_mse)), repr(float(test_mse))])
