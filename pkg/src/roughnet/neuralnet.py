"""One-hidden-layer feedforward network mapping whitened surfaces to parameters.

54 inputs -> 6 ELU units -> 6 linear outputs, i.e. 54*6 + 6 + 6*6 + 6 = 372
trainable scalars. Trained with Adam on the mean-squared logarithmic error

    L = mean_i sum_j log((1 + y_ij) / (1 + yhat_ij))^2.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from roughnet.errors import IOFailure, NumericalError, ParseError, ValidationError
from roughnet.pricer.params import PARAM_NAMES

LOSS_GUARD = 1e-6
OUTPUT_GAIN = 0.01  # shrinks the Glorot range of W2 so early outputs stay near b2
ACCURACY_BAND = 0.05  # fraction of each parameter's box width
FORMAT_VERSION = 1


def elu(z):
    return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))


def elu_grad(z):
    return np.where(z > 0, 1.0, np.exp(np.minimum(z, 0.0)))


@dataclass
class FeedforwardNet:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    PARAM_ORDER = ("W1", "b1", "W2", "b2")

    @classmethod
    def init(cls, n_in=54, n_hidden=6, n_out=6, seed=0, output_gain=1.0, output_bias=None):
        """Glorot-uniform weights, zero biases.

        ``output_gain`` scales the W2 range and ``output_bias`` (e.g. the mean
        training label) seeds b2; see ``init_for``.
        """
        rng = np.random.default_rng(seed)
        lim1 = np.sqrt(6.0 / (n_in + n_hidden))
        lim2 = output_gain * np.sqrt(6.0 / (n_hidden + n_out))
        b2 = np.zeros(n_out) if output_bias is None else np.array(output_bias, float).reshape(n_out)
        return cls(rng.uniform(-lim1, lim1, (n_in, n_hidden)), np.zeros(n_hidden),
                   rng.uniform(-lim2, lim2, (n_hidden, n_out)), b2)

    @classmethod
    def init_for(cls, labels, seed=0, output_gain=OUTPUT_GAIN):
        """Initialisation used by the pipeline: small output weights, b2 at the label mean.

        With plain Glorot output weights the initial predictions for rho often
        fall outside 1 + yhat > 0, where the log loss has no useful gradient.
        """
        labels = np.atleast_2d(np.asarray(labels, float))
        return cls.init(n_in=54, n_hidden=6, n_out=labels.shape[1], seed=seed,
                        output_gain=output_gain, output_bias=labels.mean(axis=0))

    @classmethod
    def zeros(cls, n_in=54, n_hidden=6, n_out=6):
        return cls(np.zeros((n_in, n_hidden)), np.zeros(n_hidden), np.zeros((n_hidden, n_out)), np.zeros(n_out))

    @property
    def shape(self):
        return self.W1.shape[0], self.W1.shape[1], self.W2.shape[1]

    @property
    def n_params(self):
        return sum(getattr(self, k).size for k in self.PARAM_ORDER)

    def params(self):
        return [getattr(self, k) for k in self.PARAM_ORDER]

    def copy(self):
        return FeedforwardNet(*(p.copy() for p in self.params()))

    def flat(self):
        return np.concatenate([p.ravel() for p in self.params()])

    def with_flat(self, vec):
        out, i = [], 0
        for p in self.params():
            out.append(np.asarray(vec[i : i + p.size], float).reshape(p.shape))
            i += p.size
        return FeedforwardNet(*out)

    def forward(self, X):
        """Predictions and the cache (pre-activations, hidden activations)."""
        X = np.asarray(X, float)
        if not np.all(np.isfinite(X)):
            raise ValidationError("non-finite network input")
        z = X @ self.W1 + self.b1
        h = elu(z)
        return h @ self.W2 + self.b2, (z, h)

    def predict(self, X):
        return self.forward(X)[0]

    def input_gradient(self, x, j):
        """d yhat_j / d x for each row of x: shape like x."""
        z = np.atleast_2d(x) @ self.W1 + self.b1
        g = (elu_grad(z) * self.W2[:, j]) @ self.W1.T
        return g.reshape(np.shape(x))


def msle_terms(y, yhat, guard=LOSS_GUARD, clamp=False):
    y, yhat = np.asarray(y, float), np.asarray(yhat, float)
    if np.any(1.0 + y <= 0):
        raise ValidationError("labels must satisfy 1 + y > 0")
    den = 1.0 + yhat
    if clamp:
        den = np.maximum(den, guard)
    elif np.any(den <= guard):
        raise ValidationError(f"prediction outside the loss domain (1 + yhat <= {guard})")
    return np.log((1.0 + y) / den) ** 2


def msle_loss(y, yhat, guard=LOSS_GUARD, clamp=False):
    """Sum over outputs, mean over samples (a single sample may be 1-D)."""
    t = msle_terms(y, yhat, guard, clamp)
    if t.ndim == 1:
        return float(t.sum())
    return float(t.sum(axis=1).mean())


def gradients(net: FeedforwardNet, X, Y, guard=LOSS_GUARD, dropout=None):
    """Loss and exact gradients (dW1, db1, dW2, db2) of the batch-mean MSLE.

    Predictions are clamped to 1 + yhat >= guard; the clamp has zero slope.
    ``dropout`` is an optional pair of (input mask, hidden mask) already scaled
    for inverted dropout.
    """
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    n = len(X)
    if dropout is not None:
        X = X * dropout[0]
    z = X @ net.W1 + net.b1
    h = elu(z)
    if dropout is not None:
        h = h * dropout[1]
    yhat = h @ net.W2 + net.b2
    den = 1.0 + yhat
    active = den > guard
    den = np.where(active, den, guard)
    r = np.log((1.0 + Y) / den)
    # the clamp would otherwise hide overflowing predictions
    loss = float((r * r).sum(axis=1).mean()) if np.all(np.isfinite(yhat)) else float("nan")
    g_out = np.where(active, -2.0 * r / den, 0.0) / n
    dW2 = h.T @ g_out
    db2 = g_out.sum(axis=0)
    g_h = g_out @ net.W2.T
    if dropout is not None:
        g_h = g_h * dropout[1]
    g_z = g_h * elu_grad(z)
    dW1 = X.T @ g_z
    db1 = g_z.sum(axis=0)
    return loss, (dW1, db1, dW2, db2)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    learning_rate: float = 1e-2
    # geometric decay reaching this rate at the last step; None keeps the rate constant
    final_learning_rate: float | None = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    validation_fraction: float = 0.2
    seed: int = 0
    dropout: float = 0.0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch_size must be positive")
        if not 0 <= self.validation_fraction < 1 or not 0 <= self.dropout < 1:
            raise ValidationError("validation_fraction and dropout must lie in [0, 1)")
        if self.learning_rate < 0:
            raise ValidationError("learning rate must be non-negative")
        if self.final_learning_rate is not None and self.final_learning_rate < 0:
            raise ValidationError("final learning rate must be non-negative")

    def rate(self, step, total):
        """Learning rate for optimiser step ``step`` (0-based) of ``total``."""
        lr0, lr1 = self.learning_rate, self.final_learning_rate
        if lr1 is None or lr0 == 0 or total <= 1:
            return lr0
        if lr1 == 0:
            return lr0 * (1.0 - step / (total - 1))
        return lr0 * (lr1 / lr0) ** (step / (total - 1))


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)

    def __len__(self):
        return len(self.train_loss)

    def to_csv(self, path):
        try:
            with open(path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["epoch", "train_loss", "val_loss", "train_acc", "val_acc"])
                for e in range(len(self)):
                    w.writerow([e + 1] + [repr(float(s[e])) for s in
                                          (self.train_loss, self.val_loss, self.train_acc, self.val_acc)])
        except OSError as exc:
            raise IOFailure(f"cannot write history {path}: {exc}") from exc

    @classmethod
    def from_csv(cls, path):
        h = cls()
        with open(path, encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                h.train_loss.append(float(row["train_loss"]))
                h.val_loss.append(float(row["val_loss"]))
                h.train_acc.append(float(row["train_acc"]))
                h.val_acc.append(float(row["val_acc"]))
        return h


class Adam:
    def __init__(self, params, lr, beta1, beta2, eps):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def accuracy(Y, Yhat, box_width, band=ACCURACY_BAND):
    """Fraction of (row, parameter) pairs predicted within band * box width."""
    if box_width is None:
        return float("nan")
    tol = band * np.asarray(box_width, float)
    return float(np.mean(np.abs(np.asarray(Yhat) - np.asarray(Y)) <= tol))


def train(net: FeedforwardNet, X, Y, cfg: TrainConfig = TrainConfig(), box_width=None):
    """Train a copy of ``net``; returns (trained net, history).

    The last ``validation_fraction`` of a seeded permutation of the rows is held
    out for the validation curves.
    """
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(len(X))
    n_val = int(round(cfg.validation_fraction * len(X)))
    tr, va = np.sort(perm[n_val:]), np.sort(perm[:n_val])
    Xt, Yt, Xv, Yv = X[tr], Y[tr], X[va], Y[va]

    net = net.copy()
    opt = Adam(net.params(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    hist = TrainHistory()
    keep = 1.0 - cfg.dropout
    per_epoch = -(-len(Xt) // cfg.batch_size)
    total = per_epoch * cfg.epochs
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(Xt))
        for b, start in enumerate(range(0, len(Xt), cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            masks = None
            if cfg.dropout > 0:
                masks = ((rng.random((len(idx), net.W1.shape[0])) < keep) / keep,
                         (rng.random((len(idx), net.W1.shape[1])) < keep) / keep)
            loss, grads = gradients(net, Xt[idx], Yt[idx], dropout=masks)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise NumericalError(f"non-finite loss at epoch {epoch + 1}, batch {b + 1}")
            opt.lr = cfg.rate(opt.t, total)
            opt.step(net.params(), grads)
        pt = net.predict(Xt)
        hist.train_loss.append(msle_loss(Yt, pt, clamp=True))
        hist.train_acc.append(accuracy(Yt, pt, box_width))
        if len(Xv):
            pv = net.predict(Xv)
            hist.val_loss.append(msle_loss(Yv, pv, clamp=True))
            hist.val_acc.append(accuracy(Yv, pv, box_width))
        else:
            hist.val_loss.append(float("nan"))
            hist.val_acc.append(float("nan"))
    return net, hist


@dataclass
class Evaluation:
    errors: np.ndarray  # per-parameter mean squared log error, label order
    accuracy: float
    row_errors: np.ndarray = field(repr=False)
    predictions: np.ndarray = field(repr=False)

    def as_dict(self):
        return dict(zip(PARAM_NAMES, map(float, self.errors)))


def evaluate(net: FeedforwardNet, X, Y, box_width=None, predictions=None) -> Evaluation:
    Y = np.asarray(Y, float)
    pred = net.predict(X) if predictions is None else np.asarray(predictions, float)
    terms = msle_terms(Y, pred, clamp=True)
    return Evaluation(terms.mean(axis=0), accuracy(Y, pred, box_width), terms, pred)


def _row(name, values):
    return name + " " + " ".join(repr(float(v)) for v in np.ravel(values))


def save_net(net: FeedforwardNet, path):
    n_in, n_hidden, n_out = net.shape
    lines = [f"roughnet-net {FORMAT_VERSION}", f"shape {n_in} {n_hidden} {n_out}"]
    lines += [_row("W1", r) for r in net.W1]
    lines.append(_row("b1", net.b1))
    lines += [_row("W2", r) for r in net.W2]
    lines.append(_row("b2", net.b2))
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot write network {path}: {exc}") from exc


def load_net(path) -> FeedforwardNet:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IOFailure(f"cannot read network {path}: {exc}") from exc
    if not lines or lines[0].split() != ["roughnet-net", str(FORMAT_VERSION)]:
        raise ParseError("not a roughnet network file (bad version line)", line=1)
    rows = {}
    for lineno, line in enumerate(lines[1:], start=2):
        key, _, rest = line.partition(" ")
        try:
            rows.setdefault(key, []).append([float(v) for v in rest.split()])
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno)
    try:
        n_in, n_hidden, n_out = (int(v) for v in rows["shape"][0])
        net = FeedforwardNet(np.array(rows["W1"]), np.array(rows["b1"][0]), np.array(rows["W2"]),
                             np.array(rows["b2"][0]))
    except (KeyError, ValueError) as exc:
        raise ParseError(f"malformed network file: {exc}")
    if net.shape != (n_in, n_hidden, n_out) or net.b1.size != n_hidden or net.b2.size != n_out:
        raise ParseError("array sizes do not match the declared shape")
    return net
