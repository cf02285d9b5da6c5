"""Experiment recipes and run-directory output.

Two experiment kinds exist:

``curves``
    One random per-site channel target; a roster of learners (unitary and
    restricted channels A-D) is trained over several seeds and the mean/std
    learning curves are reported.
``sweep``
    Unitary learners trained against a family of targets that share their
    angles and differ only in where partially adapted qubits sit.  Each
    target gets a box summary of the per-seed minimum losses.

Positions in experiment descriptions are 1-based ``(qubit, layer)`` pairs,
matching how lattice sites are usually drawn; everything inside the library
is 0-based.
"""

from __future__ import annotations

import json
import re
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .errors import ConfigError, VMBQCError
from .models import (
    TWO_PI,
    ModelSpec,
    exact_channel_distribution,
    make_restricted,
    placement_model,
    random_target,
    sample_model,
)
from .statevector import ClusterGeometry, SampleSet, sample_indices
from .train import (
    TrainingConfig,
    box_summary,
    learning_curve,
    noise_floor,
    train_model,
)

ROSTER = ("U", "A", "B", "C", "D")


def fig5_recipe(full: bool = False) -> dict:
    """Channel-vs-unitary learning curves.  The default is the reduced desk
    configuration; ``full=True`` restores width 7, target depth 6, learner depth 5."""
    width, t_depth, l_depth = (7, 6, 5) if full else (5, 4, 3)
    return {
        "kind": "curves",
        "seed": 2026,
        "target": {
            "width": width,
            "depth": t_depth,
            "theta_range": [0.0, TWO_PI],
            "p_range": [0.9, 1.0],
            "shots": 8000,
            "seed": 11,
        },
        "learners": {"width": width, "depth": l_depth, "roster": list(ROSTER)},
        "training": TrainingConfig().to_dict(),
    }


def fig6_recipe() -> dict:
    """One partially adapted qubit at q=4 moved through layers 1..D (plus the unitary target)."""
    return {
        "kind": "sweep",
        "seed": 2026,
        "target_seed": 6,
        "width": 7,
        "depth": 4,
        "theta_range": [0.0, 1.0],
        "p": 0.135,
        "qubits": [4],
        "layers": [1, 2, 3, 4],
        "shots": 8000,
        "training": TrainingConfig().to_dict(),
    }


def fig7_recipe() -> dict:
    """Two partially adapted qubits q=3,5 sharing p=0.1, moved through layers 1..D."""
    recipe = fig6_recipe()
    recipe.update({"target_seed": 7, "p": 0.1, "qubits": [3, 5]})
    return recipe


RECIPES = {"fig5": fig5_recipe, "fig5-full": lambda: fig5_recipe(full=True), "fig6": fig6_recipe, "fig7": fig7_recipe}


def slug(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", label).strip("_") or "x"


def learner_template(tag: str, geometry: ClusterGeometry, distilled: bool = False) -> ModelSpec:
    """Untrained learner; angles and p are placeholders overwritten at initialisation."""
    zeros = np.zeros(geometry.shape)
    if tag == "U":
        return ModelSpec.unitary(geometry, zeros)
    return make_restricted(tag, geometry, zeros, 1.0, distilled=distilled)


def expand_placements(desc: dict) -> dict[str, list[tuple[int, int]]]:
    """Label -> list of 0-based sites.  Accepts an explicit ``placements``
    mapping or ``qubits`` + ``layers`` (adds the unitary target ``U_c``)."""
    width, depth = desc["width"], desc["depth"]
    if "placements" in desc:
        raw = {label: [tuple(s) for s in sites] for label, sites in desc["placements"].items()}
    else:
        qubits = list(desc.get("qubits", []))
        if len(qubits) not in (1, 2):
            raise ConfigError("a byproduct sweep places one or two partially adapted qubits per layer")
        raw = {"U_c": []}
        for layer in desc.get("layers", []):
            raw[f"l={layer}"] = [(q, layer) for q in qubits]
    out = {}
    for label, sites in raw.items():
        conv = []
        for q, layer in sites:
            if not 1 <= q <= width:
                raise ConfigError(f"{label}: qubit {q} outside 1..{width}")
            if not 1 <= layer <= depth:
                raise ConfigError(
                    f"{label}: layer {layer} is not a measured layer; only layers 1..{depth} are "
                    f"measured, layer {depth + 1} is the output column"
                )
            conv.append((q - 1, layer - 1))
        out[label] = conv
    return out


def _train_job(args):
    model_doc, target_outcomes, width, cfg_doc, base_seed, seed, name = args
    model = ModelSpec.from_dict(model_doc)
    target = SampleSet(width, target_outcomes)
    cfg = TrainingConfig.from_dict(cfg_doc)
    try:
        return train_model(model, target, cfg, base_seed, seed, name), None
    except VMBQCError as exc:
        return None, f"{name} seed {seed}: {exc}"


def _run_jobs(jobs: list, workers: int):
    if workers <= 1:
        return [_train_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_train_job, jobs))


def _jobs_for(name, model, target: SampleSet, cfg: TrainingConfig, base_seed: int):
    doc = model.to_dict()
    return [
        (doc, target.outcomes, target.width, cfg.to_dict(), base_seed, k, name) for k in range(cfg.seeds)
    ]


def run_curves(desc: dict, workers: int = 1) -> dict:
    cfg = TrainingConfig.from_dict(desc.get("training", {}))
    t = desc["target"]
    tgeom = ClusterGeometry(t["width"], t["depth"])
    trng = np.random.default_rng(t.get("seed", 0))
    target_model = random_target(tgeom, trng, t.get("theta_range", (0.0, TWO_PI)), t.get("p_range", (0.9, 1.0)))
    target = sample_model(target_model, int(t.get("shots", cfg.shots_per_epoch)), trng)

    lspec = desc["learners"]
    lgeom = ClusterGeometry(lspec["width"], lspec["depth"])
    if lgeom.width != tgeom.width:
        raise ConfigError(f"learner width {lgeom.width} != target width {tgeom.width}")
    roster = lspec.get("roster", list(ROSTER))
    jobs, owners = [], []
    for tag in roster:
        model = learner_template(tag, lgeom, lspec.get("distilled", False))
        for job in _jobs_for(tag, model, target, cfg, desc.get("seed", 0)):
            jobs.append(job)
            owners.append(tag)
    results = _run_jobs(jobs, workers)

    traces = {tag: [] for tag in roster}
    failures = []
    for tag, (trace, err) in zip(owners, results):
        if err:
            failures.append(err)
        else:
            traces[tag].append(trace)
    curves = {tag: learning_curve(tr) for tag, tr in traces.items() if tr}
    finals = {tag: [tr.final_loss for tr in trs] for tag, trs in traces.items()}
    return {
        "kind": "curves",
        "target_model": target_model,
        "target": target,
        "traces": traces,
        "curves": curves,
        "final_losses": finals,
        "failures": failures,
    }


def sweep_targets(desc: dict) -> tuple[dict, dict, np.ndarray]:
    """Build every placement target and draw its dataset.

    All targets share one set of angles and are sampled with the same
    random stream, so placements whose output laws coincide get identical
    datasets.
    """
    geom = ClusterGeometry(desc["width"], desc["depth"])
    rng = np.random.default_rng(desc.get("target_seed", 0))
    angles = rng.uniform(*desc.get("theta_range", (0.0, 1.0)), size=geom.shape)
    data_seed = int(rng.integers(2**63))
    p = float(desc["p"])
    shots = int(desc.get("shots", 8000))
    models, datasets = {}, {}
    for label, sites in expand_placements(desc).items():
        model = placement_model(geom, angles, sites, p, distilled=desc.get("distilled", True))
        dist = exact_channel_distribution(model)
        models[label] = model
        datasets[label] = SampleSet(geom.width, sample_indices(dist, shots, np.random.default_rng(data_seed)))
    return models, datasets, angles


def run_sweep(desc: dict, workers: int = 1) -> dict:
    cfg = TrainingConfig.from_dict(desc.get("training", {}))
    models, datasets, _ = sweep_targets(desc)
    geom = ClusterGeometry(desc["width"], desc["depth"])
    learner = learner_template("U", geom)
    jobs, owners = [], []
    for label, data in datasets.items():
        for job in _jobs_for(label, learner, data, cfg, desc.get("seed", 0)):
            jobs.append(job)
            owners.append(label)
    results = _run_jobs(jobs, workers)
    traces = {label: [] for label in datasets}
    failures = []
    for label, (trace, err) in zip(owners, results):
        if err:
            failures.append(err)
        else:
            traces[label].append(trace)
    min_losses = {label: [tr.min_loss for tr in trs] for label, trs in traces.items()}
    boxes = {label: box_summary(v) for label, v in min_losses.items() if v}
    floor = noise_floor(
        exact_channel_distribution(models["U_c"]) if "U_c" in models else exact_channel_distribution(next(iter(models.values()))),
        int(desc.get("shots", 8000)),
        cfg.kernel,
    )
    return {
        "kind": "sweep",
        "target_models": models,
        "targets": datasets,
        "traces": traces,
        "min_losses": min_losses,
        "boxes": boxes,
        "noise_floor": floor,
        "failures": failures,
    }


def run_experiment(desc: dict, workers: int = 1) -> dict:
    kind = desc.get("kind")
    if kind == "curves":
        return run_curves(desc, workers)
    if kind == "sweep":
        return run_sweep(desc, workers)
    raise ConfigError(f"unknown experiment kind {kind!r}")


# --------------------------------------------------------------------------
# output

def _fmt(x) -> str:
    return repr(float(x))


def write_report(report: dict, out_dir) -> list[Path]:
    """Write CSV/JSON outputs of :func:`run_experiment`; returns the files written.

    Everything written here is a deterministic function of the experiment
    description.  Wall-clock timings go to ``timings.json``, which is the one
    file excluded from reproducibility checks.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(rel: str, text: str):
        path = out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        written.append(path)

    timings = {}
    for label, traces in report["traces"].items():
        for tr in traces:
            put(f"traces/{slug(label)}/seed{tr.seed}.csv", tr.to_csv())
            timings[f"{label}/seed{tr.seed}"] = float(np.sum(tr.wall_clock))

    if report["kind"] == "curves":
        put("target.txt", _sampleset_text(report["target"]))
        put("target_model.json", json.dumps(report["target_model"].to_dict(), indent=1) + "\n")
        for label, curve in report["curves"].items():
            put(f"curves/{slug(label)}.csv", curve.to_csv())
        rows = ["learner,mean_final_loss,std_final_loss,n"]
        for label, finals in report["final_losses"].items():
            if finals:
                f = np.asarray(finals)
                std = f.std(ddof=1) if f.size > 1 else 0.0
                rows.append(f"{label},{_fmt(f.mean())},{_fmt(std)},{f.size}")
        put("final_summary.csv", "\n".join(rows) + "\n")
    else:
        for label, data in report["targets"].items():
            put(f"targets/{slug(label)}.txt", _sampleset_text(data))
            put(f"targets/{slug(label)}.json", json.dumps(report["target_models"][label].to_dict(), indent=1) + "\n")
        rows = ["learner,seed,min_loss"]
        for label, traces in report["traces"].items():
            for tr in traces:
                rows.append(f"{label},{tr.seed},{_fmt(tr.min_loss)}")
        put("box_minloss.csv", "\n".join(rows) + "\n")
        rows = ["learner,Q1,median,Q3,LWE,UWE,outliers"]
        for label, box in report["boxes"].items():
            outl = ";".join(_fmt(v) for v in box.outliers)
            rows.append(
                f"{label},{_fmt(box.q1)},{_fmt(box.median)},{_fmt(box.q3)},{_fmt(box.lwe)},{_fmt(box.uwe)},{outl}"
            )
        put("box_summary.csv", "\n".join(rows) + "\n")
        put("noise_floor.txt", _fmt(report["noise_floor"]) + "\n")

    if report["failures"]:
        put("failures.txt", "\n".join(report["failures"]) + "\n")
    (out / "timings.json").write_text(json.dumps(timings, indent=1) + "\n")
    return written


def _sampleset_text(samples: SampleSet) -> str:
    return f"# width={samples.width} shots={len(samples)}\n" + "\n".join(samples.bitstrings()) + "\n"
