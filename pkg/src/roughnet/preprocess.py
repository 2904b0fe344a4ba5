"""Feature scaling, ZCA whitening and correlation matrices.

Order of operations is scale, then whiten. Both transforms are fitted on
training rows only and reused verbatim for test and out-of-sample rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from roughnet.errors import IOFailure, ParseError, ValidationError

MINMAX01 = "MINMAX01"
STANDARDIZE = "STANDARDIZE"
SCALER_KINDS = {1: MINMAX01, 2: STANDARDIZE}

EIGEN_FLOOR = 1e-10  # relative to the largest eigenvalue
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ScalerSpec:
    kind: str
    shift: np.ndarray = field(repr=False)
    scale: np.ndarray = field(repr=False)

    def apply(self, X):
        return (np.asarray(X, float) - self.shift) / self.scale

    def invert(self, Z):
        return np.asarray(Z, float) * self.scale + self.shift


def fit_scaler(X, kind=MINMAX01) -> ScalerSpec:
    X = np.asarray(X, float)
    kind = SCALER_KINDS.get(kind, kind)
    if kind == MINMAX01:
        shift, scale = X.min(axis=0), X.max(axis=0) - X.min(axis=0)
    elif kind == STANDARDIZE:
        shift, scale = X.mean(axis=0), X.std(axis=0)
    else:
        raise ValidationError(f"unknown scaler kind {kind!r}")
    if np.any(scale <= 0):
        cols = np.flatnonzero(scale <= 0).tolist()
        raise ValidationError(f"degenerate scale: constant feature columns {cols}")
    return ScalerSpec(kind, shift, scale)


def apply_scaler(spec: ScalerSpec, X):
    return spec.apply(X)


@dataclass(frozen=True)
class WhiteningTransform:
    """ZCA whitener W = U diag(max(lam, floor))^{-1/2} U^T and its fit data.

    ``eigenvalues``/``eigenvectors`` are those of the (1/N) covariance of the
    fitting matrix, in descending order.
    """

    mean: np.ndarray = field(repr=False)
    matrix: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)
    floor: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def n_floored(self):
        return int(np.sum(self.eigenvalues < self.floor))

    @property
    def retained(self):
        """Eigenvectors whose eigenvalues were not floored."""
        return self.eigenvectors[:, self.eigenvalues >= self.floor]

    def apply(self, X):
        return (np.asarray(X, float) - self.mean) @ self.matrix


def fit_zca(X, floor_rel=EIGEN_FLOOR, meta=None) -> WhiteningTransform:
    X = np.asarray(X, float)
    n, d = X.shape
    if n <= d:
        raise ValidationError(f"need more rows than columns to whiten, got {n}x{d}")
    mean = X.mean(axis=0)
    # the SVD of the centred data is better conditioned than an eigensolve of the covariance
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    lam = s * s / n
    floor = floor_rel * lam.max()
    W = (vt.T * np.maximum(lam, floor) ** -0.5) @ vt
    W = 0.5 * (W + W.T)
    return WhiteningTransform(mean, W, lam, vt.T.copy(), float(floor), dict(meta or {}))


def apply_zca(t: WhiteningTransform, X):
    return t.apply(X)


def covariance(X):
    """Sample covariance normalised by N."""
    Xc = np.asarray(X, float) - np.mean(X, axis=0)
    return Xc.T @ Xc / len(Xc)


def whitening_residual(t: WhiteningTransform, X_white):
    """max |C - I| of the whitened covariance within the non-floored eigenspace,
    and over the full space."""
    C = covariance(X_white)
    U = t.retained
    sub = U.T @ C @ U
    return float(np.abs(sub - np.eye(sub.shape[0])).max()), float(np.abs(C - np.eye(C.shape[0])).max())


def correlation_matrix(X):
    X = np.asarray(X, float)
    if X.shape[0] < 2:
        raise ValidationError("correlation needs at least two rows")
    sd = X.std(axis=0)
    if np.any(sd == 0):
        raise ValidationError(f"undefined correlation: constant columns {np.flatnonzero(sd == 0).tolist()}")
    Z = (X - X.mean(axis=0)) / sd
    R = Z.T @ Z / len(Z)
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 1.0)
    return np.clip(R, -1.0, 1.0)


@dataclass(frozen=True)
class Preprocessor:
    scaler: ScalerSpec
    zca: WhiteningTransform

    def transform(self, X):
        return self.zca.apply(self.scaler.apply(X))

    @classmethod
    def fit(cls, X, kind=MINMAX01, floor_rel=EIGEN_FLOOR, meta=None):
        scaler = fit_scaler(X, kind)
        meta = dict(meta or {})
        meta["scaler_kind"] = scaler.kind
        return cls(scaler, fit_zca(scaler.apply(X), floor_rel, meta))


def _row(name, values):
    return name + " " + " ".join(repr(float(v)) for v in np.ravel(values))


def save_preprocessor(pre: Preprocessor, path):
    d = pre.scaler.shift.size
    lines = [f"roughnet-transform {FORMAT_VERSION}", f"dim {d}", f"scaler_kind {pre.scaler.kind}",
             _row("scaler_shift", pre.scaler.shift), _row("scaler_scale", pre.scaler.scale),
             _row("zca_mean", pre.zca.mean), _row("zca_floor", [pre.zca.floor]),
             _row("zca_eigenvalues", pre.zca.eigenvalues)]
    lines += [_row("zca_eigenvectors", r) for r in pre.zca.eigenvectors]
    lines += [_row("zca_matrix", r) for r in pre.zca.matrix]
    lines.append("meta " + json.dumps(pre.zca.meta, sort_keys=True))
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot write transform {path}: {exc}") from exc


def load_preprocessor(path) -> Preprocessor:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IOFailure(f"cannot read transform {path}: {exc}") from exc
    if not lines or lines[0].split() != ["roughnet-transform", str(FORMAT_VERSION)]:
        raise ParseError("not a roughnet transform file (bad version line)", line=1)
    rows = {}
    meta = {}
    for lineno, line in enumerate(lines[1:], start=2):
        key, _, rest = line.partition(" ")
        if key == "meta":
            meta = json.loads(rest)
            continue
        if key == "scaler_kind":
            rows[key] = rest.strip()
            continue
        try:
            vals = [float(v) for v in rest.split()]
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno)
        rows.setdefault(key, []).append(vals)
    try:
        d = int(rows["dim"][0][0])
        scaler = ScalerSpec(rows["scaler_kind"], np.array(rows["scaler_shift"][0]), np.array(rows["scaler_scale"][0]))
        zca = WhiteningTransform(
            np.array(rows["zca_mean"][0]), np.array(rows["zca_matrix"]), np.array(rows["zca_eigenvalues"][0]),
            np.array(rows["zca_eigenvectors"]), rows["zca_floor"][0][0], meta,
        )
    except (KeyError, IndexError) as exc:
        raise ParseError(f"missing field {exc}")
    if zca.matrix.shape != (d, d) or zca.eigenvectors.shape != (d, d):
        raise ParseError("matrix dimensions do not match 'dim'")
    return Preprocessor(scaler, zca)
