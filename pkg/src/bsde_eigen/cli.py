"""Command-line entry point: ``train``, ``reference`` and ``evaluate``.

Runs are described by INI files with the sections ``[problem]``, ``[train]``
and optionally ``[second]`` (second-eigenpair protocol) and ``[output]``.
Bundled presets can be named instead of a path (``--config ls_d5``).

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import sys
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from . import metrics, problems, reference, trainer
from .network import load_checkpoint, predict, save_checkpoint
from .normalization import PiecewiseConstant
from .sde import PropagationError

log = logging.getLogger("bsde_eigen")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2

# --scale desk: iterations and every step boundary shrink by this factor,
# hidden widths are capped, and the batch is capped. T, N and the
# schedule values are left alone.
DESK_ITERATION_FACTOR = 0.05
DESK_MAX_WIDTH = 40
DESK_MAX_BATCH = 512


class ConfigError(ValueError):
    pass


class UsageError(Exception):
    pass


# -- config parsing ---------------------------------------------------------------


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.replace(",", " ").split()]


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional(parse):
    def inner(text):
        return None if text.strip().lower() in ("", "none") else parse(text)

    return inner


PROBLEM_KEYS = {
    "fokker_planck": {"c": _floats},
    "linear_schrodinger": {"c": _floats, "n_eigenpairs": int, "n_modes": int},
    "double_well": {"A": _floats, "n_eigenpairs": int, "n_modes": int},
    "nonlinear_schrodinger": {"epsilon": float},
}

_TRAIN_PARSERS = {
    "T": float, "N": int, "K": int, "order": int, "hidden": _ints,
    "eta1": float, "eta2": float, "eta3": float, "Z0": float,
    "clip_P": float, "clip_Q": float,
    "lr": _floats, "lr_boundaries": _ints, "gamma": _floats, "gamma_boundaries": _ints,
    "iterations": int, "seed": int, "lambda_init": float, "lambda_freeze_steps": int,
    "record_every": int, "smooth_window": int, "report_last": int,
    "validation_size": _optional(int),
    "adam_beta1": float, "adam_beta2": float, "adam_eps": float,
    "grad_through_z": _bool, "grad_clip_norm": _optional(float),
    "eigen_index": int, "supervised_steps": int, "supervised_lr": float,
    "checkpoint_every": int, "workers": int,
}

SECOND_KEYS = {
    "lambda_bar": _optional(float),
    "lambda_offset": float,
    "init_eps": _optional(float),
    "init_other": int,
    "init_scale": float,
}

OUTPUT_KEYS = {"density_bins": int}


@dataclass
class RunConfig:
    problem: dict
    train: trainer.TrainConfig
    second: dict | None = None
    output: dict = field(default_factory=lambda: {"density_bins": 100})
    workers: int = 1

    def build_problem(self):
        return build_problem(self.problem)

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp["problem"] = {k: _fmt(v) for k, v in self.problem.items()}
        tr = {}
        for f in fields(self.train):
            v = getattr(self.train, f.name)
            if f.name in ("lr", "gamma"):
                tr[f.name] = _fmt(v.values)
                tr[f"{f.name}_boundaries"] = _fmt(v.boundaries)
            else:
                tr[f.name] = _fmt(v)
        tr["workers"] = str(self.workers)
        cp["train"] = tr
        if self.second is not None:
            cp["second"] = {k: _fmt(v) for k, v in self.second.items()}
        cp["output"] = {k: _fmt(v) for k, v in self.output.items()}
        lines = []
        for section in cp.sections():
            lines.append(f"[{section}]")
            lines += [f"{k} = {v}" for k, v in cp[section].items()]
            lines.append("")
        return "\n".join(lines)


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple, np.ndarray)):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def preset_names() -> list[str]:
    root = resources.files("bsde_eigen") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def _read_source(source: str) -> str:
    path = Path(source)
    if path.is_file():
        return path.read_text()
    if source in preset_names():
        return (resources.files("bsde_eigen") / "presets" / f"{source}.ini").read_text()
    raise ConfigError(f"no config file or preset named {source!r}")


def parse_config(text: str) -> RunConfig:
    """Validate an INI document and fill defaults. Unknown keys are errors."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    unknown = set(cp.sections()) - {"problem", "train", "second", "output"}
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    if "problem" not in cp:
        raise ConfigError("missing [problem] section")

    prob = dict(cp["problem"])
    name = prob.pop("name", None)
    if name not in PROBLEM_KEYS:
        raise ConfigError(f"problem name must be one of {sorted(PROBLEM_KEYS)}")
    if "d" not in prob:
        raise ConfigError("[problem] needs d")
    problem = {"name": name, "d": _parse("problem", "d", prob.pop("d"), int)}
    allowed = PROBLEM_KEYS[name]
    for k, v in prob.items():
        if k not in allowed:
            raise ConfigError(f"unknown key {k!r} for problem {name}")
        problem[k] = _parse("problem", k, v, allowed[k])
    if problem["d"] < 1:
        raise ConfigError("d must be >= 1")

    raw = dict(cp["train"]) if "train" in cp else {}
    kw = {}
    for k, v in raw.items():
        if k not in _TRAIN_PARSERS:
            raise ConfigError(f"unknown key {k!r} in [train]")
        kw[k] = _parse("train", k, v, _TRAIN_PARSERS[k])
    workers = kw.pop("workers", 1)
    defaults = trainer.TrainConfig()
    for sched in ("lr", "gamma"):
        base = getattr(defaults, sched)
        values = kw.pop(sched, base.values)
        bounds = kw.pop(f"{sched}_boundaries", base.boundaries)
        try:
            kw[sched] = PiecewiseConstant(values, bounds)
        except ValueError as exc:
            raise ConfigError(f"[train] {sched}: {exc}") from exc
    try:
        train = trainer.TrainConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[train]: {exc}") from exc
    if workers < 1:
        raise ConfigError("workers must be >= 1")

    second = None
    if "second" in cp:
        second = {"lambda_bar": None, "lambda_offset": 0.0, "init_eps": None, "init_other": 0, "init_scale": 2.0}
        for k, v in cp["second"].items():
            if k not in SECOND_KEYS:
                raise ConfigError(f"unknown key {k!r} in [second]")
            second[k] = _parse("second", k, v, SECOND_KEYS[k])
        if train.lambda_freeze_steps <= 0:
            raise ConfigError("[second] needs lambda_freeze_steps > 0 in [train]")

    output = {"density_bins": 100}
    if "output" in cp:
        for k, v in cp["output"].items():
            if k not in OUTPUT_KEYS:
                raise ConfigError(f"unknown key {k!r} in [output]")
            output[k] = _parse("output", k, v, OUTPUT_KEYS[k])
    return RunConfig(problem, train, second, output, workers)


def _parse(section, key, text, parser):
    try:
        return parser(text)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from exc


def load_config(source: str) -> RunConfig:
    return parse_config(_read_source(source))


def build_problem(spec: dict):
    kw = {k: v for k, v in spec.items() if k not in ("name", "d")}
    return problems.CATALOGUE[spec["name"]](spec["d"], **kw)


def apply_scale(cfg: RunConfig, scale: str) -> RunConfig:
    if scale == "full":
        return cfg
    if scale != "desk":
        raise ConfigError(f"unknown scale {scale!r}")
    t = cfg.train
    f = DESK_ITERATION_FACTOR

    def shrink(n):
        return 0 if n == 0 else max(1, int(round(n * f)))

    new = t.with_updates(
        iterations=shrink(t.iterations),
        lambda_freeze_steps=shrink(t.lambda_freeze_steps),
        supervised_steps=shrink(t.supervised_steps),
        checkpoint_every=shrink(t.checkpoint_every),
        report_last=max(t.record_every, shrink(t.report_last)),
        hidden=tuple(min(h, DESK_MAX_WIDTH) for h in t.hidden),
        K=min(t.K, DESK_MAX_BATCH),
        lr=t.lr.scaled(f),
        gamma=t.gamma.scaled(f),
    )
    return RunConfig(cfg.problem, new, cfg.second, cfg.output, cfg.workers)


# -- outputs ----------------------------------------------------------------------


def write_density_csv(path, net_values, Z, ref_values, bins: int = 100) -> float:
    """Densities of the normalised net and reference values; returns their L1 distance."""
    net = np.asarray(net_values) / Z
    ref = np.asarray(ref_values) / np.sqrt(np.mean(np.square(ref_values)))
    if np.dot(net, ref) < 0:
        ref = -ref
    a, b = metrics.density_pair(net, ref, bins)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("bin_center", "density_net", "density_ref"))
        for row in zip(a.centers, a.density, b.density):
            w.writerow([repr(float(v)) for v in row])
    return metrics.l1_distance(a, b)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n")


# -- commands ---------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.iterations is not None:
        overrides["iterations"] = args.iterations
    cfg = apply_scale(cfg, args.scale)
    if overrides:
        cfg = RunConfig(cfg.problem, cfg.train.with_updates(**overrides), cfg.second, cfg.output, cfg.workers)
    if args.workers is not None:
        cfg.workers = args.workers
    problem = cfg.build_problem()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.to_ini())
    tc = cfg.train

    def report(rec):
        log.info("step %d loss %.6g lambda %.6g Z %.4g err_psi %.3g", rec.step, rec.loss, rec.lam, rec.Z, rec.err_psi_l2)

    kw = dict(callbacks=[report], checkpoint_dir=out)
    if args.resume:
        kw["resume"] = args.resume
    if cfg.second is not None and not args.resume:
        s = cfg.second
        lam_bar = s["lambda_bar"]
        if lam_bar is None:
            if tc.eigen_index >= len(problem.eigenpairs):
                raise ConfigError("lambda_bar is required when no reference eigenvalue is known")
            lam_bar = problem.eigenpairs[tc.eigen_index].lam + s["lambda_offset"]
        targets = None
        if s["init_eps"] is not None:
            targets = trainer.mixture_targets(problem, tc.eigen_index, s["init_other"], s["init_eps"], s["init_scale"])
        result = trainer.train_second_eigenpair(problem, tc, lam_bar, init_targets=targets, **kw)
    else:
        result = trainer.train(problem, tc, **kw)

    trainer.write_history_csv(out / "history.csv", result.history)
    save_checkpoint(out / "checkpoint.npz", result.params, Z=result.Z, step=result.step, seed=tc.seed, adam=result.adam)
    summary = result.summary(tc.report_last)
    valid = trainer.validation_set(problem, tc)
    if valid is not None:
        psi, _ = predict(result.params, valid.points)
        summary["density_l1"] = write_density_csv(out / "density.csv", psi, result.Z, valid.psi, cfg.output["density_bins"])
    _write_json(out / "summary.json", summary)
    print(json.dumps(summary, sort_keys=True, default=float))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = apply_scale(load_config(args.config), args.scale)
    if args.seed is not None:
        cfg.train = cfg.train.with_updates(seed=args.seed)
    problem = cfg.build_problem()
    ckpt = Path(args.checkpoint)
    if not ckpt.is_file():
        raise ConfigError(f"checkpoint not found: {ckpt}")
    params, meta = load_checkpoint(ckpt)
    if params.d != problem.d:
        raise ConfigError(f"checkpoint has d={params.d}, problem has d={problem.d}")
    valid = trainer.validation_set(problem, cfg.train)
    if valid is None:
        raise ConfigError("problem has no reference eigenpair to evaluate against")
    psi, grad = predict(params, valid.points)
    Z = float(meta["Z"])
    out = {"step": int(meta["step"]), "lambda": params.lam, "Z": Z, **valid.evaluate(psi, grad, Z, params.lam)}
    if args.out:
        dest = Path(args.out)
        dest.mkdir(parents=True, exist_ok=True)
        out["density_l1"] = write_density_csv(dest / "density.csv", psi, Z, valid.psi, cfg.output["density_bins"])
        _write_json(dest / "evaluation.json", out)
    print(json.dumps(out, sort_keys=True, default=float))
    return EXIT_OK


def _parse_k(text: str) -> list[int]:
    try:
        ks = _ints(text)
    except ValueError as exc:
        raise UsageError(f"--k: {exc}") from exc
    if not ks or min(ks) < 1:
        raise UsageError("--k takes 1-based indices")
    return ks


def cmd_reference(args) -> int:
    ks = _parse_k(args.k)
    if args.config:
        cfg = load_config(args.config)
        spec = cfg.problem
        if spec["name"] not in ("linear_schrodinger", "double_well"):
            raise ConfigError("reference needs a separable problem (linear_schrodinger or double_well)")
        problem = build_problem({**spec, "n_eigenpairs": max(ks)})
        rows = []
        for k in ks:
            pair = problem.eigenpairs[k - 1]
            rows.append(pair)
            print(f"k={k} lambda={pair.lam:.10g}")
        if args.export:
            rng = np.random.default_rng(args.seed or 0)
            x = rng.uniform(0, 2 * np.pi, size=(args.points, problem.d))
            with open(args.export, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow([f"x{i + 1}" for i in range(problem.d)] + [f"psi_{k}" for k in ks])
                vals = np.stack([p.psi(x) for p in rows], axis=1)
                for xi, vi in zip(x, vals):
                    w.writerow([repr(float(v)) for v in (*xi, *vi)])
        return EXIT_OK

    prob = reference.FourierProblem1D(args.c, args.freq, args.n_modes)
    if max(ks) > prob.size:
        raise UsageError(f"--k must be at most {prob.size} for n_modes={args.n_modes}")
    spectrum = reference.spectrum_1d(prob)
    pairs = [spectrum[k - 1] for k in ks]
    for k, p in zip(ks, pairs):
        print(f"k={k} lambda={p.lam:.10g}")
        print("  cos " + " ".join(f"{v:.6e}" for v in p.cos_coeffs))
        print("  sin " + " ".join(f"{v:.6e}" for v in p.sin_coeffs))
    if args.export:
        x = np.linspace(0.0, 2 * np.pi, args.points, endpoint=False)
        with open(args.export, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x"] + [f"psi_{k}" for k in ks])
            for i, xi in enumerate(x):
                w.writerow([repr(float(xi))] + [repr(float(p(xi))) for p in pairs])
    return EXIT_OK


# -- parser -------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bsde-eigen", description="Fixed-point neural eigensolver for periodic operators.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train on a config file or bundled preset")
    t.add_argument("--config", required=True, help="INI path or preset name")
    t.add_argument("--seed", type=int)
    t.add_argument("--out", default="run")
    t.add_argument("--scale", choices=("full", "desk"), default="full")
    t.add_argument("--workers", type=int, help="accepted for interface compatibility; compute is vectorised in-process")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--iterations", type=int)
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("reference", help="spectral reference eigenpairs")
    r.add_argument("--c", type=float, default=0.0, help="potential amplitude c in c cos(freq x)")
    r.add_argument("--freq", type=int, default=1)
    r.add_argument("--k", default="1", help="comma-separated 1-based indices")
    r.add_argument("--n-modes", type=int, default=32)
    r.add_argument("--config", help="use the separable problem from a config instead of --c/--freq")
    r.add_argument("--export", help="CSV path for sampled eigenfunction values")
    r.add_argument("--points", type=int, default=256)
    r.add_argument("--seed", type=int)
    r.set_defaults(func=cmd_reference)

    e = sub.add_parser("evaluate", help="recompute validation metrics from a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--config", required=True)
    e.add_argument("--out")
    e.add_argument("--seed", type=int)
    e.add_argument("--scale", choices=("full", "desk"), default="full")
    e.set_defaults(func=cmd_evaluate)

    sub.add_parser("presets", help="list bundled presets").set_defaults(func=lambda a: print("\n".join(preset_names())) or EXIT_OK)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PropagationError, FloatingPointError, reference.ConvergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
