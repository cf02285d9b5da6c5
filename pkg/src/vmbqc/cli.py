"""``vmbqc`` command line.

Every command resolves its configuration as: built-in defaults, then an
optional JSON file (``--config``), then explicit flags.  The resolved
configuration is stored in ``manifest.json`` inside the run directory, and
``vmbqc rerun MANIFEST`` replays it.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 capacity error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, NumericalError, VMBQCError
from .experiments import (
    RECIPES,
    fig5_recipe,
    learner_template,
    run_experiment,
    slug,
    write_report,
)
from .mmd import KernelConfig, full_gradient, grad_p_fd, grad_p_sites, loss
from .models import (
    TWO_PI,
    ModelSpec,
    exact_channel_distribution,
    make_restricted,
    random_target,
    sample_model,
)
from .observation import gap_study
from .pauli import format_table, propagation_table
from .statevector import ClusterGeometry, SampleSet, index_to_bitstring
from .train import TrainingConfig, learning_curve, train_model

OUTPUT_ROOT_ENV = "VMBQC_OUTPUT_ROOT"


# --------------------------------------------------------------------------
# plumbing

def _default_out(command: str, config: dict) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    digest = hashlib.sha1(json.dumps(config, sort_keys=True).encode()).hexdigest()[:10]
    return root / f"{command}-{digest}"


@contextmanager
def _locked(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    lock = out / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(f"run directory {out} is locked by another invocation ({lock})") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield out
    finally:
        lock.unlink(missing_ok=True)


def _resolve(defaults: dict, args, keys) -> dict:
    config = dict(defaults)
    if getattr(args, "config", None):
        try:
            config.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    for key in keys:
        val = getattr(args, key, None)
        if val is not None:
            config[key] = val
    return config


def _write_manifest(out: Path, command: str, config: dict, outputs, started: float) -> Path:
    files = sorted({str(Path(p).relative_to(out)) for p in outputs})
    manifest = {
        "command": command,
        "config": config,
        "seeds": {k: v for k, v in config.items() if "seed" in k},
        "code_version": __version__,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "outputs": files,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1) + "\n")
    return path


def _text(path: Path, text: str, written: list) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    written.append(path)


def _fmt(x) -> str:
    return repr(float(x))


def _pair(values, name):
    if values is None:
        return None
    if len(values) != 2:
        raise ConfigError(f"{name} needs two values")
    return [float(v) for v in values]


# --------------------------------------------------------------------------
# commands; each takes a resolved config and an output directory

def do_gen_target(config: dict, out: Path) -> list:
    geom = ClusterGeometry(int(config["width"]), int(config["depth"]))
    rng = np.random.default_rng(int(config["seed"]))
    lo, hi = config["theta_range"]
    plo, phi = config["p_range"]
    if not (0.0 <= plo <= phi <= 1.0):
        raise ConfigError(f"invalid correction probability range {config['p_range']}")
    if not lo <= hi:
        raise ConfigError(f"invalid angle range {config['theta_range']}")
    model = random_target(geom, rng, (lo, hi), (plo, phi))
    samples = sample_model(model, int(config["shots"]), rng)
    written = []
    samples.save(out / "target.txt", seed=int(config["seed"]))
    written.append(out / "target.txt")
    model.save(out / "target_model.json", seed=int(config["seed"]))
    written.append(out / "target_model.json")
    return written


GEN_TARGET_DEFAULTS = {
    "width": 7,
    "depth": 6,
    "theta_range": [0.0, TWO_PI],
    "p_range": [0.9, 1.0],
    "shots": 8000,
    "seed": 0,
}


def do_train(config: dict, out: Path) -> list:
    if "recipe" in config and config["recipe"]:
        desc = RECIPES[config["recipe"]]()
        desc["training"].update(config.get("training", {}))
        report = run_experiment(desc, int(config.get("workers", 1)))
        return write_report(report, out)
    dataset = config.get("dataset")
    if not dataset:
        raise ConfigError("train needs a dataset file or a recipe")
    path = Path(dataset)
    if not path.is_file():
        raise ConfigError(f"dataset file {path} not found")
    target = SampleSet.load(path)
    width = int(config.get("width") or target.width)
    if width != target.width:
        raise ConfigError(f"learner width {width} does not match dataset width {target.width}")
    geom = ClusterGeometry(width, int(config["depth"]))
    cfg = TrainingConfig.from_dict(config.get("training", {}))
    written = []
    failures = []
    for tag in config["learners"]:
        model = learner_template(tag, geom)
        traces = []
        for k in range(cfg.seeds):
            try:
                traces.append(train_model(model, target, cfg, int(config["seed"]), k, tag))
            except NumericalError as exc:
                failures.append(f"{tag} seed {k}: {exc}")
        for tr in traces:
            _text(out / "traces" / slug(tag) / f"seed{tr.seed}.csv", tr.to_csv(), written)
        if traces:
            _text(out / "curves" / f"{slug(tag)}.csv", learning_curve(traces).to_csv(), written)
    if failures:
        _text(out / "failures.txt", "\n".join(failures) + "\n", written)
    return written


TRAIN_DEFAULTS = {
    "dataset": None,
    "recipe": None,
    "learners": ["U", "A", "B", "C", "D"],
    "depth": 5,
    "seed": 0,
    "workers": 1,
    "training": {},
}


def do_sweep(config: dict, out: Path) -> list:
    base = RECIPES[config["recipe"]]() if config.get("recipe") else RECIPES["fig6"]()
    for key in ("width", "depth", "p", "qubits", "layers", "placements", "theta_range", "seed", "target_seed", "shots"):
        if config.get(key) is not None:
            base[key] = config[key]
    if config.get("placements") is not None:
        base.pop("qubits", None)
    base["training"].update(config.get("training", {}))
    report = run_experiment(base, int(config.get("workers", 1)))
    return write_report(report, out)


SWEEP_DEFAULTS = {"recipe": "fig6", "workers": 1, "training": {}}


def do_grad_check(config: dict, out: Path) -> list:
    geom = ClusterGeometry(int(config["width"]), int(config["depth"]))
    if geom.width > 4:
        raise ConfigError("grad-check runs on exact losses and is limited to width <= 4")
    rng = np.random.default_rng(int(config["seed"]))
    kernel = KernelConfig(tuple(config["bandwidths"]))
    tol = float(config["tolerance"])
    lines = ["instance,variant,parameter,qubit,layer,method,value,finite_difference,abs_error"]
    worst = 0.0
    conv_lines = ["instance,epsilon,fd_error"]
    for inst in range(int(config["instances"])):
        variant = config["variant"]
        if config.get("site"):
            q, layer = config["site"]
            site = (q - 1, layer - 1)
        else:
            site = None
        model = make_restricted(variant, geom, rng.uniform(0, TWO_PI, geom.shape), float(rng.uniform(0.05, 0.95)), site=site, distilled=bool(config.get("distilled")))
        target = exact_channel_distribution(
            make_restricted("A", geom, rng.uniform(0, TWO_PI, geom.shape), float(rng.uniform(0.2, 0.9)))
        )
        rep = full_gradient(model, target, kernel)
        h = float(config["theta_step"])
        for s in np.ndindex(*geom.shape):
            fd = (loss(model.shifted(s, h), target, kernel) - loss(model.shifted(s, -h), target, kernel)) / (2 * h)
            err = abs(rep.dtheta[s] - fd)
            worst = max(worst, err)
            lines.append(f"{inst},{variant},theta,{s[0] + 1},{s[1] + 1},parameter-shift,{_fmt(rep.dtheta[s])},{_fmt(fd)},{_fmt(err)}")
        per_site = grad_p_sites(model, target, kernel)
        for s in model.schedule.sites:
            p = model.schedule.p
            e = float(config["p_step"])
            lo, hi = max(0.0, p - e), min(1.0, p + e)
            f_hi = loss(model.with_schedule(model.schedule.force_site(s, hi)), target, kernel)
            f_lo = loss(model.with_schedule(model.schedule.force_site(s, lo)), target, kernel)
            fd = (f_hi - f_lo) / (hi - lo)
            err = abs(per_site[s] - fd)
            worst = max(worst, err)
            lines.append(f"{inst},{variant},p,{s[0] + 1},{s[1] + 1},analytic,{_fmt(per_site[s])},{_fmt(fd)},{_fmt(err)}")
        fd_shared = grad_p_fd(model, target, float(config["p_step"]), kernel)
        err = abs(rep.dp - fd_shared)
        worst = max(worst, err)
        lines.append(f"{inst},{variant},p,,,analytic-shared,{_fmt(rep.dp)},{_fmt(fd_shared)},{_fmt(err)}")
        for eps in config["convergence_eps"]:
            conv_lines.append(f"{inst},{_fmt(eps)},{_fmt(abs(grad_p_fd(model, target, eps, kernel) - rep.dp))}")
    written = []
    _text(out / "grad_check.csv", "\n".join(lines) + "\n", written)
    _text(out / "fd_convergence.csv", "\n".join(conv_lines) + "\n", written)
    status = "PASS" if worst <= tol else "FAIL"
    _text(out / "grad_check_summary.txt", f"{status} max_abs_error={_fmt(worst)} tolerance={_fmt(tol)}\n", written)
    print(f"grad-check {status}: max |analytic - finite difference| = {worst:.3e} (tolerance {tol:.0e})")
    if worst > tol:
        raise NumericalError(f"gradient mismatch {worst:.3e} exceeds {tol:.0e}")
    return written


GRAD_CHECK_DEFAULTS = {
    "width": 3,
    "depth": 1,
    "variant": "A",
    "site": None,
    "distilled": False,
    "instances": 5,
    "seed": 0,
    "tolerance": 1e-5,
    "theta_step": 1e-4,
    "p_step": 1e-3,
    "convergence_eps": [4e-3, 2e-3, 1e-3],
    "bandwidths": [0.25, 1.0, 4.0],
}


def do_exact_dist(config: dict, out: Path) -> list:
    if config.get("model"):
        model = ModelSpec.load(config["model"])
    else:
        geom = ClusterGeometry(int(config["width"]), int(config["depth"]))
        rng = np.random.default_rng(int(config["seed"]))
        angles = rng.uniform(0, TWO_PI, geom.shape)
        variant = config["variant"]
        if variant == "U":
            model = ModelSpec.unitary(geom, angles)
        else:
            model = make_restricted(variant, geom, angles, float(config["p"]), distilled=bool(config.get("distilled")))
    dist = exact_channel_distribution(model)
    rows = ["bitstring,probability"]
    rows += [f"{index_to_bitstring(x, model.geometry.width)},{_fmt(v)}" for x, v in enumerate(dist)]
    written = []
    _text(out / "exact_distribution.csv", "\n".join(rows) + "\n", written)
    model.save(out / "model.json")
    written.append(out / "model.json")
    return written


EXACT_DIST_DEFAULTS = {"model": None, "width": 3, "depth": 1, "variant": "A", "p": 0.5, "seed": 0, "distilled": False}


def do_observation_gap(config: dict, out: Path) -> list:
    geom = ClusterGeometry(int(config["width"]), int(config["depth"]))
    if config.get("angles") is not None:
        angles = np.asarray(config["angles"], dtype=float)
    else:
        angles = np.random.default_rng(int(config["seed"])).uniform(0, TWO_PI, geom.shape)
    study = gap_study(angles, float(config["p"]), config["variant"], int(config["grid"]), geom.width, geom.depth)
    written = []
    _text(out / "observation_gap.json", json.dumps(study, indent=1) + "\n", written)
    print(
        f"TV gap {study['gap']:.6e} (grid {study['coarse']['grid_points']}: {study['coarse']['gap_tv']:.6e}, "
        f"grid {study['fine']['grid_points']}: {study['fine']['gap_tv']:.6e})"
    )
    return written


OBSERVATION_DEFAULTS = {"width": 3, "depth": 1, "variant": "A", "p": 0.5, "grid": 64, "seed": 1, "angles": None}


def do_propagate(config: dict, out: Path | None) -> list:
    geom = ClusterGeometry(int(config["width"]), int(config["depth"]))
    s = np.zeros(geom.shape, dtype=int)
    for q, layer in config["sites"]:
        if not geom.contains(q - 1, layer - 1):
            raise ConfigError(f"site ({q},{layer}) outside a {geom.width}x{geom.depth} lattice")
        s[q - 1, layer - 1] ^= 1
    rows = propagation_table(s, geom)
    print(format_table(rows))
    print(f"terminal Pauli string: {rows[-1]['after'].label()}")
    return []


def do_report(config: dict, out: Path) -> list:
    run = Path(config["run_dir"])
    if not run.is_dir():
        raise ConfigError(f"{run} is not a run directory")
    lines = [f"# Run report: {run.name}", ""]
    manifest = run / "manifest.json"
    if manifest.is_file():
        m = json.loads(manifest.read_text())
        lines += [f"command: `{m['command']}`  code version: {m['code_version']}", ""]
    for name in ("final_summary.csv", "box_summary.csv", "grad_check_summary.txt", "noise_floor.txt"):
        f = run / name
        if f.is_file():
            lines += [f"## {name}", "", "```", f.read_text().rstrip(), "```", ""]
    gap = run / "observation_gap.json"
    if gap.is_file():
        g = json.loads(gap.read_text())
        lines += ["## observation gap", "", f"TV gap: {g['gap']!r} (relative change under grid doubling {g['relative_change']!r})", ""]
    written = []
    _text(out / "report.md", "\n".join(lines) + "\n", written)
    print("\n".join(lines))
    return written


COMMANDS = {
    "gen-target": (do_gen_target, GEN_TARGET_DEFAULTS),
    "train": (do_train, TRAIN_DEFAULTS),
    "sweep-byproduct": (do_sweep, SWEEP_DEFAULTS),
    "grad-check": (do_grad_check, GRAD_CHECK_DEFAULTS),
    "exact-dist": (do_exact_dist, EXACT_DIST_DEFAULTS),
    "observation-gap": (do_observation_gap, OBSERVATION_DEFAULTS),
    "report": (do_report, {}),
}


def execute(command: str, config: dict, out: Path | None = None) -> Path:
    """Run ``command`` with a fully resolved ``config``; returns the run directory."""
    func, _ = COMMANDS[command]
    if out is None:
        out = Path(config["run_dir"]) if command == "report" else _default_out(command, config)
    out = Path(out)
    started = time.time()
    with _locked(out):
        written = func(config, out)
        _write_manifest(out, command, config, written, started)
    return out


def rerun(manifest_path, out: Path) -> Path:
    manifest = json.loads(Path(manifest_path).read_text())
    return execute(manifest["command"], manifest["config"], out)


def compare_runs(a, b) -> list[str]:
    """Files listed in ``a``'s manifest whose bytes differ in ``b``."""
    a, b = Path(a), Path(b)
    files = json.loads((a / "manifest.json").read_text())["outputs"]
    return [f for f in files if not (b / f).is_file() or (a / f).read_bytes() != (b / f).read_bytes()]


# --------------------------------------------------------------------------
# argument parsing

def _site(text: str):
    try:
        q, layer = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected QUBIT,LAYER, got {text!r}") from None
    return [q, layer]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vmbqc", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with command options")
        p.add_argument("--out", help=f"run directory (default: ${OUTPUT_ROOT_ENV}/<command>-<hash>)")
        return p

    p = common(sub.add_parser("gen-target", help="sample a random per-site channel target"))
    p.add_argument("--width", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--theta-range", dest="theta_range", type=float, nargs=2)
    p.add_argument("--p-range", dest="p_range", type=float, nargs=2)
    p.add_argument("--shots", type=int)
    p.add_argument("--seed", type=int)

    p = common(sub.add_parser("train", help="train learners on a dataset, or run a learning-curve recipe"))
    p.add_argument("--dataset")
    p.add_argument("--recipe", choices=["fig5", "fig5-full"])
    p.add_argument("--learners", nargs="+", choices=["U", "A", "B", "C", "D"])
    p.add_argument("--depth", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seeds", type=int)
    p.add_argument("--shots", type=int, help="model samples per epoch")

    p = common(sub.add_parser("sweep-byproduct", help="train unitary learners on byproduct-placement targets"))
    p.add_argument("--recipe", choices=["fig6", "fig7"])
    p.add_argument("--p", type=float)
    p.add_argument("--qubits", type=int, nargs="+")
    p.add_argument("--layers", type=int, nargs="+")
    p.add_argument("--width", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seeds", type=int)
    p.add_argument("--shots", type=int, help="model samples per epoch")

    p = common(sub.add_parser("grad-check", help="compare analytic gradients with finite differences"))
    p.add_argument("--width", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--variant", choices=["A", "B", "C", "D"])
    p.add_argument("--site", type=_site)
    p.add_argument("--distilled", action="store_true", default=None)
    p.add_argument("--instances", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--tolerance", type=float)

    p = common(sub.add_parser("exact-dist", help="dump an exact output distribution as CSV"))
    p.add_argument("--model", help="model JSON (as written by gen-target)")
    p.add_argument("--width", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--variant", choices=["U", "A", "B", "C", "D"])
    p.add_argument("--p", type=float)
    p.add_argument("--distilled", action="store_true", default=None)
    p.add_argument("--seed", type=int)

    p = common(sub.add_parser("observation-gap", help="TV distance from a channel to the unitary family"))
    p.add_argument("--variant", choices=["A", "B", "C", "D"])
    p.add_argument("--p", type=float)
    p.add_argument("--grid", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--angles", type=float, nargs="+")

    p = sub.add_parser("report", help="summarise a run directory")
    p.add_argument("run_dir")
    p.add_argument("--out")

    p = sub.add_parser("propagate", help="print the byproduct propagation table")
    p.add_argument("--width", type=int, default=5)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--site", dest="sites", type=_site, action="append", default=None, help="QUBIT,LAYER (1-based)")

    p = sub.add_parser("rerun", help="replay a manifest into a new run directory")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--check", action="store_true", help="compare outputs byte for byte with the original run")
    return parser


TRAINING_FLAGS = {"epochs": "epochs", "seeds": "seeds", "shots": "shots_per_epoch"}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "propagate":
            do_propagate({"width": args.width, "depth": args.depth, "sites": args.sites or [[3, 1]]}, None)
            return 0
        if args.command == "rerun":
            out = rerun(args.manifest, Path(args.out))
            if args.check:
                diff = compare_runs(Path(args.manifest).parent, out)
                if diff:
                    print("outputs differ: " + ", ".join(diff))
                    return 2
                print(f"all outputs reproduced byte for byte in {out}")
            return 0
        func, defaults = COMMANDS[args.command]
        keys = [k for k in vars(args) if k not in ("command", "config", "out")]
        config = _resolve(defaults, args, keys)
        if "training" in defaults:
            training = dict(config.get("training", {}))
            for flag, field_name in TRAINING_FLAGS.items():
                val = config.pop(flag, None)
                if val is not None:
                    training[field_name] = val
            config["training"] = training
        for key in ("theta_range", "p_range"):
            if key in config:
                config[key] = _pair(config[key], key)
        out = Path(args.out) if getattr(args, "out", None) else None
        out = execute(args.command, config, out)
        print(f"outputs in {out}")
        return 0
    except VMBQCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
