"""Command-line driver for the calibration pipeline.

Every command reads an optional INI file (``--config``) and then its own flags;
flags win. All files live in ``out_dir``:

    data.csv, data.meta.json     generate
    train.csv, test.csv          preprocess (split)
    transform.txt                preprocess (scaler + whitener, train rows only)
    net.txt, history.csv         train
    errors_<tag>.csv             evaluate (one row, six parameter errors + accuracy)
    predictions_<tag>.csv        evaluate (per-row labels, predictions, errors)
    interpret/                   attributions, heat maps (CSV + SVG), rankings
    validate.csv                 validate-pricer
    report/*.png                 report

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 file problem.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from roughnet import dataset as ds_mod
from roughnet.dataset import WORKERS_ENV, ParameterBox, get_box
from roughnet.errors import IOFailure, NumericalError, RoughNetError, ValidationError
from roughnet.pricer.fourier import PricerConfig
from roughnet.pricer.params import DEFAULT_MATURITIES, DEFAULT_STRIKES, PARAM_NAMES, SmileGrid

log = logging.getLogger("roughnet")

# section -> key -> (type, default, help); every key is also a --flag
SCHEMA = {
    "run": {
        "out_dir": (str, "run", "directory holding every pipeline file"),
        "workers": (int, 0, f"worker processes (0: ${WORKERS_ENV} or CPU count)"),
    },
    "generate": {
        "box": (str, "narrow", "parameter box preset: narrow, wide, out_of_sample"),
        "lower": (str, "", "explicit lower bounds rho,v0,kappa,theta,nu,H (overrides --box)"),
        "upper": (str, "", "explicit upper bounds, same order"),
        "n": (int, 2000, "number of parameter draws"),
        "seed": (int, 0, "seed of the parameter draws"),
        "output": (str, "data.csv", "dataset file, relative to out_dir"),
        "strikes": (str, "", "comma-separated moneyness grid override"),
        "maturities": (str, "", "comma-separated maturity grid override"),
    },
    "pricer": {
        "steps_per_year": (int, 200, "Riccati time steps per year"),
        "n_nodes": (int, 128, "Fourier quadrature nodes"),
        "u_max": (float, 200.0, "Fourier truncation point"),
        "tail_tol": (float, 1e-8, "maximum tolerated truncation tail (price units)"),
    },
    "preprocess": {
        "data": (str, "data.csv", "input dataset, relative to out_dir"),
        "approach": (int, 1, "scaling approach: 1 = min-max to [0,1], 2 = standardise"),
        "test_fraction": (float, 0.15, "share of rows held out as test data"),
        "split_seed": (int, 0, "seed of the train/test split"),
    },
    "train": {
        "epochs": (int, 100, "training epochs"),
        "batch_size": (int, 128, "mini-batch size"),
        "learning_rate": (float, 1e-2, "initial Adam learning rate"),
        "final_learning_rate": (float, 1e-3, "learning rate at the last step (geometric decay); <0 disables"),
        "validation_fraction": (float, 0.2, "share of training rows used for validation curves"),
        "dropout": (float, 0.0, "dropout rate on inputs and hidden units"),
        "seed": (int, 0, "seed of initialisation, validation split and shuffling"),
        "output_gain": (float, 0.01, "scale of the output-layer initial weights"),
    },
    "evaluate": {
        "data": (str, "test.csv", "dataset to evaluate, relative to out_dir"),
        "tag": (str, "test", "suffix of the error and prediction files"),
        "identity": (bool, False, "test mode: use the labels as predictions"),
    },
    "interpret": {
        "data": (str, "test.csv", "instances to explain, relative to out_dir"),
        "methods": (str, "shap,deeplift,lrp,gradient_input", "comma-separated methods (also: lime)"),
        "n_instances": (int, 0, "explain the first n rows (0: all)"),
        "background": (int, 1000, "background rows for shap"),
        "seed": (int, 0, "seed for background choice and LIME sampling"),
        "lime_samples": (int, 5000, "LIME perturbation samples"),
        "lrp_eps": (float, 1e-4, "LRP stabiliser relative to mean |pre-activation|"),
    },
    "validate": {
        "box": (str, "narrow", "box whose midpoint is checked"),
        "mc_paths": (int, 100_000, "Monte Carlo paths"),
        "mc_steps": (int, 256, "Monte Carlo time steps"),
        "mc_seed": (int, 20240601, "Monte Carlo seed"),
        "price_scale": (float, 1.0, "testing hook: multiply Fourier prices before comparing"),
    },
}

COMMANDS = {
    "generate": ("generate", "pricer"),
    "preprocess": ("preprocess",),
    "train": ("train",),
    "evaluate": ("evaluate",),
    "interpret": ("interpret",),
    "validate-pricer": ("validate", "pricer"),
    "report": (),
    "pipeline": ("generate", "pricer", "preprocess", "train", "evaluate", "interpret"),
}


def _parse_bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValidationError(f"not a boolean: {v!r}")


def _convert(typ, value, where):
    try:
        return _parse_bool(value) if typ is bool else typ(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{where}: cannot read {value!r} as {typ.__name__}")


def build_parser():
    parser = argparse.ArgumentParser(prog="roughnet", description=__doc__.split("\n")[0])
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, sections in COMMANDS.items():
        p = sub.add_parser(cmd)
        p.add_argument("--config", help="INI file with [run] and per-command sections")
        for section in ("run",) + sections:
            group = p.add_argument_group(section)
            for key, (typ, default, text) in SCHEMA[section].items():
                flag = "--" + key.replace("_", "-")
                dest = f"{section}.{key}"
                if any(a.dest == dest for a in p._actions):
                    continue
                if any(flag in a.option_strings for a in p._actions):
                    flag = f"--{section}-{key.replace('_', '-')}"
                if typ is bool:
                    group.add_argument(flag, dest=dest, action="store_const", const=True, default=None,
                                       help=f"{text} (default {default})")
                else:
                    group.add_argument(flag, dest=dest, default=None, help=f"{text} (default {default})")
    return parser


def resolve(args, sections):
    """Merge defaults, config file and flags into {section: {key: value}}."""
    ini = configparser.ConfigParser()
    if getattr(args, "config", None):
        if not ini.read(args.config, encoding="utf-8"):
            raise IOFailure(f"cannot read config file {args.config}")
        for s in ini.sections():
            if s not in SCHEMA:
                raise ValidationError(f"config: unknown section [{s}]")
            for k in ini[s]:
                if k not in SCHEMA[s]:
                    raise ValidationError(f"config: unknown key {k!r} in [{s}]")
    cfg = {}
    for section in ("run",) + tuple(sections):
        cfg[section] = {}
        for key, (typ, default, _) in SCHEMA[section].items():
            value = default
            if ini.has_option(section, key):
                value = _convert(typ, ini.get(section, key), f"[{section}] {key}")
            flag = getattr(args, f"{section}.{key}", None)
            if flag is not None:
                value = _convert(typ, flag, f"--{key}")
            cfg[section][key] = value
    return cfg


def _floats(text, what):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ValidationError(f"{what}: expected comma-separated numbers, got {text!r}")


def _box(g) -> ParameterBox:
    if g["lower"] or g["upper"]:
        return ParameterBox("custom", _floats(g["lower"], "lower"), _floats(g["upper"], "upper"))
    return get_box(g["box"])


def _grid(g) -> SmileGrid:
    strikes = _floats(g["strikes"], "strikes") if g["strikes"] else DEFAULT_STRIKES
    mats = _floats(g["maturities"], "maturities") if g["maturities"] else DEFAULT_MATURITIES
    return SmileGrid(strikes, mats)


def _pricer(p) -> PricerConfig:
    return PricerConfig(p["steps_per_year"], p["n_nodes"], p["u_max"], p["tail_tol"])


def _out(cfg, name):
    return Path(cfg["run"]["out_dir"]) / name


def _need(path, producer):
    if not Path(path).exists():
        raise IOFailure(f"missing {path}; run `roughnet {producer}` first (or point the flag at the file)")
    return path


def _workers(cfg):
    return cfg["run"]["workers"] or ds_mod.worker_count()


def _box_width(data):
    if data.box is not None:
        return data.box.width
    log.warning("no box metadata; accuracy uses the label ranges as box widths")
    width = np.ptp(data.labels, axis=0)
    return np.where(width > 0, width, 1.0)


def cmd_generate(cfg):
    g = cfg["generate"]
    data = ds_mod.generate(_box(g), g["n"], _grid(g), g["seed"], _pricer(cfg["pricer"]), _workers(cfg))
    path = ds_mod.save(data, _out(cfg, g["output"]))
    log.info("wrote %s: %d rows, %d dropped", path, len(data), data.metadata["n_dropped"])
    return path


def cmd_preprocess(cfg):
    from roughnet.preprocess import Preprocessor, save_preprocessor

    p = cfg["preprocess"]
    data = ds_mod.load(_need(_out(cfg, p["data"]), "generate"))
    train, test = ds_mod.split(data, p["test_fraction"], p["split_seed"])
    for part, name in ((train, "train"), (test, "test")):
        part.metadata.update(split=name, split_seed=p["split_seed"], test_fraction=p["test_fraction"])
        ds_mod.save(part, _out(cfg, f"{name}.csv"))
    meta = {"dataset_sha256": ds_mod.dataset_hash(train), "rows": len(train)}
    pre = Preprocessor.fit(train.features, p["approach"], meta=meta)
    save_preprocessor(pre, _out(cfg, "transform.txt"))
    log.info("split %d/%d rows; %d of %d eigenvalues floored", len(train), len(test), pre.zca.n_floored,
             pre.zca.eigenvalues.size)


def _load_transform(cfg):
    from roughnet.preprocess import load_preprocessor

    return load_preprocessor(_need(_out(cfg, "transform.txt"), "preprocess"))


def _load_net(cfg):
    from roughnet.neuralnet import load_net

    return load_net(_need(_out(cfg, "net.txt"), "train"))


def cmd_train(cfg):
    from roughnet.neuralnet import FeedforwardNet, TrainConfig, save_net, train

    t = cfg["train"]
    data = ds_mod.load(_need(_out(cfg, "train.csv"), "preprocess"))
    X = _load_transform(cfg).transform(data.features)
    final_lr = t["final_learning_rate"] if t["final_learning_rate"] >= 0 else None
    tc = TrainConfig(t["epochs"], t["batch_size"], t["learning_rate"], final_learning_rate=final_lr,
                     validation_fraction=t["validation_fraction"], seed=t["seed"], dropout=t["dropout"])
    net0 = FeedforwardNet.init_for(data.labels, seed=t["seed"], output_gain=t["output_gain"])
    net, hist = train(net0, X, data.labels, tc, _box_width(data))
    save_net(net, _out(cfg, "net.txt"))
    hist.to_csv(_out(cfg, "history.csv"))
    log.info("trained %d epochs: val loss %.3g, val accuracy %.3f", tc.epochs, hist.val_loss[-1], hist.val_acc[-1])


def cmd_evaluate(cfg):
    from roughnet.neuralnet import evaluate

    e = cfg["evaluate"]
    data = ds_mod.load(_need(_out(cfg, e["data"]), "preprocess"))
    if e["identity"]:
        result = evaluate(None, None, data.labels, _box_width(data), predictions=data.labels)
    else:
        X = _load_transform(cfg).transform(data.features)
        result = evaluate(_load_net(cfg), X, data.labels, _box_width(data))
    write_error_table(result, len(data), e["tag"], _out(cfg, f"errors_{e['tag']}.csv"))
    write_predictions(data.labels, result, _out(cfg, f"predictions_{e['tag']}.csv"))
    log.info("%s errors: %s; accuracy %.3f", e["tag"],
             ", ".join(f"{k} {v:.2e}" for k, v in result.as_dict().items()), result.accuracy)
    return result


def _write_csv(path, header, rows):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def write_error_table(result, n, tag, path):
    _write_csv(path, ["dataset", "rows"] + list(PARAM_NAMES) + ["accuracy"],
               [[tag, n] + [repr(float(v)) for v in result.errors] + [repr(float(result.accuracy))]])


def write_predictions(labels, result, path):
    header = ["row"] + [f"{p}_{s}" for p in PARAM_NAMES for s in ("true", "pred", "err")]
    rows = []
    for i, (y, yh, err) in enumerate(zip(labels, result.predictions, result.row_errors)):
        rows.append([i] + [repr(float(v)) for trio in zip(y, yh, err) for v in trio])
    _write_csv(path, header, rows)


def cmd_interpret(cfg):
    from roughnet.interpret import heatmap as hm_mod
    from roughnet.interpret.backprop import deeplift_rescale, gradient_input, lrp_epsilon
    from roughnet.interpret.base import METHODS
    from roughnet.interpret.lime import LimeConfig, lime_many
    from roughnet.interpret.shapley import choose_background, shapley_global

    c = cfg["interpret"]
    methods = [m.strip() for m in c["methods"].split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise ValidationError(f"unknown interpret methods {bad}; choose from {', '.join(METHODS)}")
    data = ds_mod.load(_need(_out(cfg, c["data"]), "preprocess"))
    pre, net = _load_transform(cfg), _load_net(cfg)
    X = pre.transform(data.features)
    if c["n_instances"] > 0:
        X = X[: c["n_instances"]]
    grid = data.grid
    outdir = _out(cfg, "interpret")

    def run(method, j):
        if method == "gradient_input":
            return gradient_input(net, X, j)
        if method == "deeplift":
            return deeplift_rescale(net, X, j)
        if method == "lrp":
            return lrp_epsilon(net, X, j, eps_rel=c["lrp_eps"])
        if method == "shap":
            bg = choose_background(pre.transform(data.features), c["background"], c["seed"])
            return shapley_global(net, bg, X, j)
        train = ds_mod.load(_need(_out(cfg, "train.csv"), "preprocess"))
        reference = pre.transform(train.features).mean(axis=0)
        lc = LimeConfig(n_samples=c["lime_samples"], seed=c["seed"])
        return lime_many(net.predict, X, reference, j, lc, workers=_workers(cfg))

    for method in methods:
        results, maps = [], []
        for j, name in enumerate(PARAM_NAMES):
            res = run(method, j)
            results += res
            hm = hm_mod.aggregate_heatmap(res, grid)
            maps.append(hm)
            _write_map(hm_mod, hm, outdir, f"{method}_{name}")
        overall = hm_mod.overall_heatmap(maps)
        _write_map(hm_mod, overall, outdir, f"{method}_overall")
        hm_mod.write_attributions(results, outdir / f"attributions_{method}.csv", grid)
        log.info("%s: overall top cells %s", method, overall.top(3))


def _write_map(hm_mod, hm, outdir, stem):
    hm_mod.write_heatmap_csv(hm, outdir / f"heatmap_{stem}.csv")
    hm_mod.write_heatmap_svg(hm, outdir / f"heatmap_{stem}.svg")
    hm_mod.write_ranking_csv(hm, outdir / f"ranking_{stem}.csv")


def cmd_validate_pricer(cfg):
    from roughnet.checks import validate_pricer
    from roughnet.mc import McConfig

    v = cfg["validate"]
    mc_cfg = McConfig(v["mc_paths"], v["mc_steps"], v["mc_seed"])
    checks = validate_pricer(get_box(v["box"]), SmileGrid(), _pricer(cfg["pricer"]), mc_cfg, v["price_scale"])
    _write_csv(_out(cfg, "validate.csv"), ["check", "value", "tolerance", "passed", "detail"],
               [[c.name, repr(c.value), repr(c.tolerance), c.passed, c.detail] for c in checks])
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name} = {c.value:.3g} (tolerance {c.tolerance:g}) {c.detail}")
    failed = [c.name for c in checks if not c.passed]
    if failed:
        raise NumericalError(f"pricer checks failed: {', '.join(failed)}")


def cmd_report(cfg):
    from roughnet import report
    from roughnet.interpret.heatmap import read_heatmap_csv
    from roughnet.neuralnet import TrainHistory
    from roughnet.preprocess import correlation_matrix

    out = _out(cfg, "report")
    written = []
    if _out(cfg, "train.csv").exists() and _out(cfg, "transform.txt").exists():
        train = ds_mod.load(_out(cfg, "train.csv"))
        pre = _load_transform(cfg)
        scaled = pre.scaler.apply(train.features)
        before, after = correlation_matrix(scaled), correlation_matrix(pre.zca.apply(scaled))
        out.mkdir(parents=True, exist_ok=True)
        np.savetxt(out / "correlation_before.csv", before, delimiter=",", fmt="%.17g")
        np.savetxt(out / "correlation_after.csv", after, delimiter=",", fmt="%.17g")
        written.append(report.correlation_figure(before, after, out / "correlation.png"))
    if _out(cfg, "history.csv").exists():
        written.append(report.history_figure(TrainHistory.from_csv(_out(cfg, "history.csv")), out / "history.png"))
    for path in sorted(Path(cfg["run"]["out_dir"]).glob("predictions_*.csv")):
        tag = path.stem.removeprefix("predictions_")
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        labels, errors = table[:, 1::3], table[:, 3::3]
        written.append(report.error_scatter_figure(labels, errors, out / f"errors_{tag}.png", f"{tag} data"))
    for path in sorted(_out(cfg, "interpret").glob("heatmap_*.csv")):
        method, _, output = path.stem.removeprefix("heatmap_").rpartition("_")
        written.append(report.heatmap_figure(read_heatmap_csv(path, method, output), out / f"{path.stem}.png"))
    if not written:
        raise IOFailure(f"nothing to report in {cfg['run']['out_dir']}; run the pipeline first")
    for w in written:
        print(w)


def cmd_pipeline(cfg):
    cmd_generate(cfg)
    cfg["preprocess"]["data"] = cfg["generate"]["output"]
    cmd_preprocess(cfg)
    cmd_train(cfg)
    cmd_evaluate(cfg)
    cmd_interpret(cfg)


HANDLERS = {
    "generate": cmd_generate, "preprocess": cmd_preprocess, "train": cmd_train, "evaluate": cmd_evaluate,
    "interpret": cmd_interpret, "validate-pricer": cmd_validate_pricer, "report": cmd_report,
    "pipeline": cmd_pipeline,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args, COMMANDS[args.command])
        if cfg["run"]["workers"]:
            os.environ[WORKERS_ENV] = str(cfg["run"]["workers"])
        HANDLERS[args.command](cfg)
    except RoughNetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return IOFailure.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
