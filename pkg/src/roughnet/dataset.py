"""Labelled datasets: uniform parameter draws and their implied-vol surfaces.

Features are surfaces flattened in strike-major order (all maturities of the
lowest strike first), so column ``iv_K0.6_T0.9`` is feature index 1.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from roughnet.errors import DataQualityError, IOFailure, ParseError, ValidationError
from roughnet.pricer.fourier import PricerConfig, surfaces
from roughnet.pricer.params import PARAM_NAMES, RoughHestonParams, SmileGrid

log = logging.getLogger(__name__)

WORKERS_ENV = "ROUGHNET_WORKERS"
BATCH_ROWS = 16
MAX_FAILURE_RATE = 0.01


@dataclass(frozen=True)
class ParameterBox:
    name: str
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo, hi = np.asarray(self.lower, float), np.asarray(self.upper, float)
        if lo.shape != (6,) or hi.shape != (6,):
            raise ValidationError("a parameter box needs six lower and six upper bounds")
        if np.any(lo > hi):
            raise ValidationError(f"box {self.name}: lower bound above upper bound")
        object.__setattr__(self, "lower", tuple(map(float, lo)))
        object.__setattr__(self, "upper", tuple(map(float, hi)))

    @property
    def width(self):
        return np.asarray(self.upper) - np.asarray(self.lower)

    @property
    def midpoint(self):
        return 0.5 * (np.asarray(self.upper) + np.asarray(self.lower))

    def contains(self, labels):
        labels = np.atleast_2d(labels)
        return np.all((labels >= self.lower) & (labels <= self.upper), axis=1)

    def as_dict(self):
        return {"name": self.name, "lower": dict(zip(PARAM_NAMES, self.lower)),
                "upper": dict(zip(PARAM_NAMES, self.upper))}

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], [d["lower"][k] for k in PARAM_NAMES], [d["upper"][k] for k in PARAM_NAMES])


#                     rho      v0      kappa   theta   nu      H
NARROW = ParameterBox("narrow",
                      (-0.7071, 0.0262, 0.1206, 0.0721, 0.2720, 0.1286),
                      (-0.5940, 0.0778, 0.5041, 0.1499, 0.3748, 0.1766))
WIDE = ParameterBox("wide",
                    (-1.0, 0.0157, 0.0724, 0.0433, 0.1632, 0.0),
                    (-0.3564, 0.1089, 0.7057, 0.2099, 0.5247, 0.4472))
OUT_OF_SAMPLE = ParameterBox("out_of_sample",
                             (-0.31, 0.12, 0.8, 0.24, 0.6, 0.47),
                             (-0.21, 0.15, 1.0, 0.29, 0.74, 0.5))
PRESETS = {b.name: b for b in (NARROW, WIDE, OUT_OF_SAMPLE)}
PRESETS["oos"] = OUT_OF_SAMPLE


def get_box(name) -> ParameterBox:
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise ValidationError(f"unknown parameter box {name!r}; choose from narrow, wide, out_of_sample")


def feature_columns(grid: SmileGrid):
    return ["iv_" + c for c in grid.cell_labels()]


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    grid: SmileGrid = field(default_factory=SmileGrid)
    box: ParameterBox | None = None
    seed: int | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        if self.features.ndim != 2 or self.labels.ndim != 2:
            raise ValidationError("features and labels must be 2-D")
        if len(self.features) != len(self.labels):
            raise ValidationError("feature and label row counts differ")
        if self.features.shape[1] != self.grid.size or self.labels.shape[1] != 6:
            raise ValidationError(
                f"expected {self.grid.size} feature and 6 label columns, "
                f"got {self.features.shape[1]} and {self.labels.shape[1]}"
            )

    def __len__(self):
        return len(self.labels)

    def subset(self, idx):
        return LabeledDataset(self.features[idx], self.labels[idx], self.grid, self.box, self.seed,
                              dict(self.metadata))


def sample_params(box: ParameterBox, n: int, seed) -> list:
    if n < 1:
        raise ValidationError("n must be at least 1")
    rng = np.random.default_rng(seed)
    u = rng.random((n, 6))
    draws = np.asarray(box.lower) + u * box.width
    return [RoughHestonParams.from_array(row) for row in draws]


def _price_batch(args):
    params, grid, config = args
    return surfaces(params, grid, config)


def worker_count():
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"{WORKERS_ENV} must be an integer, got {env!r}")
    return os.cpu_count() or 1


def generate(box: ParameterBox, n: int, grid: SmileGrid = SmileGrid(), seed=0,
             config: PricerConfig = PricerConfig(), workers: int | None = None,
             max_failure_rate: float = MAX_FAILURE_RATE) -> LabeledDataset:
    params = sample_params(box, n, seed)
    batches = [params[i : i + BATCH_ROWS] for i in range(0, n, BATCH_ROWS)]
    jobs = [(b, grid, config) for b in batches]
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(min(workers, len(jobs))) as pool:
            results = list(pool.map(_price_batch, jobs))
    else:
        results = [_price_batch(j) for j in jobs]

    values = np.concatenate([r[0] for r in results]).reshape(n, -1)
    failures = {}
    for b, (_, errs) in enumerate(results):
        for i, msg in errs.items():
            failures[b * BATCH_ROWS + i] = msg
    keep = np.array([i not in failures for i in range(n)])
    if len(failures) > max_failure_rate * n:
        raise DataQualityError(
            f"{len(failures)} of {n} pricings failed (limit {max_failure_rate:.0%}); first: "
            + next(iter(failures.values()))
        )
    for i, msg in sorted(failures.items()):
        log.warning("dropped row %d: %s", i, msg)
    labels = np.array([p.to_array() for p in params])
    meta = {
        "n_requested": n,
        "n_dropped": len(failures),
        "n_hurst_clamped": int(sum(p.clamped for p in params)),
        "pricer": config.as_dict(),
        "box": box.as_dict(),
        "seed": seed,
        "grid": {"strikes": list(grid.strikes), "maturities": list(grid.maturities)},
    }
    return LabeledDataset(values[keep], labels[keep], grid, box, seed, meta)


def split(ds: LabeledDataset, test_fraction: float, seed):
    if not 0 < test_fraction < 1:
        raise ValidationError("test_fraction must lie in (0, 1)")
    n = len(ds)
    n_test = min(max(int(round(n * test_fraction)), 1), n - 1) if n > 1 else 0
    perm = np.random.default_rng(seed).permutation(n)
    return ds.subset(np.sort(perm[n_test:])), ds.subset(np.sort(perm[:n_test]))


def _fmt(x):
    return repr(float(x))


def dataset_to_csv(ds: LabeledDataset) -> str:
    header = ",".join(list(PARAM_NAMES) + feature_columns(ds.grid))
    lines = [header]
    for lab, feat in zip(ds.labels, ds.features):
        lines.append(",".join(_fmt(v) for v in np.concatenate([lab, feat])))
    return "\n".join(lines) + "\n"


def save(ds: LabeledDataset, path):
    path = Path(path)
    text = dataset_to_csv(ds)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        meta = dict(ds.metadata)
        meta["sha256"] = hashlib.sha256(text.encode()).hexdigest()
        meta["rows"] = len(ds)
        meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot write dataset {path}: {exc}") from exc
    return path


def meta_path(path):
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def _parse_header(header):
    cols = header.strip().split(",")
    if tuple(cols[:6]) != PARAM_NAMES:
        raise ParseError(f"expected label columns {','.join(PARAM_NAMES)}", line=1)
    cells = []
    for c in cols[6:]:
        try:
            k, t = c.removeprefix("iv_K").split("_T")
            cells.append((float(k), float(t)))
        except ValueError:
            raise ParseError(f"bad feature column name {c!r}", line=1)
    strikes = sorted({k for k, _ in cells})
    mats = sorted({t for _, t in cells})
    grid = SmileGrid(strikes, mats)
    if cells != grid.cells():
        raise ParseError("feature columns are not in strike-major grid order", line=1)
    return grid


def load(path) -> LabeledDataset:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IOFailure(f"cannot read dataset {path}: {exc}") from exc
    if not lines:
        raise ParseError("empty file", line=1)
    grid = _parse_header(lines[0])
    width = 6 + grid.size
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != width:
            raise ParseError(f"expected {width} fields, found {len(parts)}", line=lineno)
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno)
    data = np.array(rows, dtype=float).reshape(-1, width)
    meta, box, seed = {}, None, None
    mp = meta_path(path)
    if mp.exists():
        meta = json.loads(mp.read_text(encoding="utf-8"))
        if "box" in meta:
            box = ParameterBox.from_dict(meta["box"])
        seed = meta.get("seed")
    return LabeledDataset(data[:, 6:], data[:, :6], grid, box, seed, meta)


def dataset_hash(ds: LabeledDataset) -> str:
    return hashlib.sha256(dataset_to_csv(ds).encode()).hexdigest()


def column_stats(x):
    """Per-column (mean, std, min, max) rows, used in reports and tests."""
    x = np.asarray(x, float)
    return np.vstack([x.mean(0), x.std(0), x.min(0), x.max(0)])
