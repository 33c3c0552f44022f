"""Config-driven experiment runner with persistent, seeded, self-describing
outputs.

Every experiment is a JSON config (kind + model parameters + per-kind
fields) mapped to a set of CSV tables and a `run.json` manifest listing
each output file with its SHA-256 digest.  Reruns of the same config and
seed produce byte-identical CSVs regardless of the thread count.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .mkv_solver import PicardConfig, blowup_guaranteed, picard_solve
from .paths import LossCurve, TimeGrid, jump_detect, levy_metric, sup_distance
from .particle import SimOutput, empirical_density, simulate_absorbing, simulate_elastic
from .sampling import (
    ModelParams,
    RngStream,
    has_density,
    law_from_dict,
    law_to_dict,
)
from .stefan_pde import PdeGrid, initial_density_for_law, pde_solve

__all__ = [
    "ExperimentConfig",
    "RunManifest",
    "ExperimentError",
    "load_config",
    "run_experiment",
    "write_outputs",
]

KINDS = ("kappa_sweep", "n_sweep", "pde_compare", "blowup_demo", "picard_vs_particle")


class ExperimentError(RuntimeError):
    """A sub-run failed; the message names the offending run."""


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int
    params: ModelParams
    output_dir: Optional[str] = None
    kappas: tuple[float, ...] = ()
    include_absorbing: bool = True
    n_list: tuple[int, ...] = ()
    picard: Optional[PicardConfig] = None
    pde: Optional[dict] = None
    jump_threshold: Optional[float] = None
    raw: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "kappa_sweep":
            if not self.kappas:
                raise ValueError("kappa_sweep requires a nonempty 'kappas' list")
            if list(self.kappas) != sorted(self.kappas) or min(self.kappas) <= 0:
                raise ValueError("'kappas' must be sorted and positive")
        if self.kind == "n_sweep":
            if not self.n_list:
                raise ValueError("n_sweep requires a nonempty 'n_list'")
            if list(self.n_list) != sorted(self.n_list) or min(self.n_list) < 1:
                raise ValueError("'n_list' must be sorted and positive")
        if self.kind == "picard_vs_particle" and self.picard is None:
            raise ValueError("picard_vs_particle requires a 'picard' section")
        if self.kind == "pde_compare" and self.pde is None:
            raise ValueError("pde_compare requires a 'pde' section")


def load_config(source) -> ExperimentConfig:
    """Parse a config from a path, JSON string, or dict."""
    if isinstance(source, dict):
        doc = source
    else:
        text = Path(source).read_text() if Path(str(source)).exists() else str(source)
        doc = json.loads(text)
    return _config_from_dict(doc)


def _config_from_dict(doc: dict) -> ExperimentConfig:
    try:
        kind = doc["kind"]
        seed = doc["seed"]
        model = doc["model"]
    except KeyError as e:
        raise ValueError(f"config is missing required field {e.args[0]!r}") from None
    if not isinstance(seed, int):
        raise ValueError("'seed' must be an integer (no implicit entropy)")
    grid = TimeGrid(t_end=float(model["t_end"]), n_steps=int(model["n_steps"]))
    params = ModelParams(
        alpha=float(model["alpha"]),
        kappa=float(model.get("kappa", 0.0)),
        law=law_from_dict(model["law"]),
        grid=grid,
        n_particles=int(model.get("n_particles", 1)),
    )
    picard = None
    if "picard" in doc:
        picard = PicardConfig(
            mc_samples=int(doc["picard"]["mc_samples"]),
            n_iter_max=int(doc["picard"].get("n_iter_max", 20)),
            bridge_correction=bool(doc["picard"].get("bridge_correction", True)),
            stop_tol=doc["picard"].get("stop_tol"),
        )
    return ExperimentConfig(
        kind=kind,
        seed=seed,
        params=params,
        output_dir=doc.get("output_dir"),
        kappas=tuple(float(k) for k in doc.get("kappas", ())),
        include_absorbing=bool(doc.get("include_absorbing", True)),
        n_list=tuple(int(n) for n in doc.get("n_list", ())),
        picard=picard,
        pde=doc.get("pde"),
        jump_threshold=doc.get("jump_threshold"),
        raw=doc,
    )


@dataclass
class RunManifest:
    config: dict
    version: str
    created_at: str
    flags: dict
    inventory: list[dict]
    valid: bool = True
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "version": self.version,
            "created_at": self.created_at,
            "flags": self.flags,
            "inventory": self.inventory,
            "valid": self.valid,
            "error": self.error,
        }


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _loss_table(curve: LossCurve) -> tuple[list[str], list[tuple]]:
    curve = LossCurve(curve.grid, curve.values)  # re-validate on write
    times = curve.grid.times()
    return ["t", "lambda"], list(zip(times, curve.values))


def write_outputs(tables: dict, manifest: RunManifest, output_dir) -> list[dict]:
    """Write CSV tables and the manifest; record SHA-256 digests.

    `tables` maps file names to (header, rows).  Returns the inventory.
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    inventory = []
    for name in sorted(tables):
        header, rows = tables[name]
        path = out / name
        lines = [",".join(header)]
        lines += [",".join(_fmt(v) for v in row) for row in rows]
        data = ("\n".join(lines) + "\n").encode()
        path.write_bytes(data)
        inventory.append(
            {"file": name, "sha256": hashlib.sha256(data).hexdigest(), "rows": len(rows)}
        )
    manifest.inventory = inventory
    (out / "run.json").write_text(json.dumps(manifest.to_dict(), indent=2) + "\n")
    return inventory


def _new_manifest(config: ExperimentConfig) -> RunManifest:
    flags = {
        "blowup_guaranteed": blowup_guaranteed(
            config.params.alpha, config.params.law, config.params.kappa
        ),
        "density_hypothesis": has_density(config.params.law),
    }
    echo = json.loads(json.dumps(config.raw)) if config.raw else {
        "kind": config.kind,
        "seed": config.seed,
    }
    echo.setdefault("model", {}).setdefault("law", law_to_dict(config.params.law))
    return RunManifest(
        config=echo,
        version=__version__,
        created_at=datetime.now(timezone.utc).isoformat(),
        flags=flags,
        inventory=[],
    )


def _jump_rows(curve: LossCurve, tag: str, threshold: float) -> list[tuple]:
    times = curve.grid.times()
    return [(times[k], size, tag) for k, size in jump_detect(curve, threshold)]


def _distance_rows(curves: dict[str, LossCurve]) -> list[tuple]:
    tags = list(curves)
    rows = []
    for i, a in enumerate(tags):
        for b in tags[i + 1 :]:
            rows.append(
                (a, b, levy_metric(curves[a], curves[b]), sup_distance(curves[a], curves[b]))
            )
    return rows


def _run_many(jobs: dict, threads: int) -> dict:
    """Run tagged thunks, optionally in parallel; deterministic results
    because every job owns its seeded streams."""
    results = {}
    if threads <= 1 or len(jobs) <= 1:
        for tag, fn in jobs.items():
            try:
                results[tag] = fn()
            except Exception as e:
                raise ExperimentError(f"sub-run {tag!r} failed: {e}") from e
        return results
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = {tag: pool.submit(fn) for tag, fn in jobs.items()}
        for tag, fut in futures.items():
            try:
                results[tag] = fut.result()
            except Exception as e:
                raise ExperimentError(f"sub-run {tag!r} failed: {e}") from e
    return results


def run_experiment(
    config: ExperimentConfig,
    output_dir=None,
    *,
    threads: int = 1,
    seed_override: Optional[int] = None,
) -> RunManifest:
    """Execute an experiment and persist tables + manifest.

    On a sub-run failure, whatever was produced is written with the
    manifest marked invalid, then an ExperimentError is raised naming
    the failing sub-run.
    """
    if seed_override is not None:
        config = _config_from_dict({**config.raw, "seed": seed_override})
    out = Path(output_dir or config.output_dir or ".")
    manifest = _new_manifest(config)
    tables: dict = {}
    try:
        runner = {
            "kappa_sweep": _run_kappa_sweep,
            "n_sweep": _run_n_sweep,
            "pde_compare": _run_pde_compare,
            "blowup_demo": _run_blowup_demo,
            "picard_vs_particle": _run_picard_vs_particle,
        }[config.kind]
        runner(config, tables, manifest, threads)
    except Exception as e:
        manifest.valid = False
        manifest.error = str(e)
        write_outputs(tables, manifest, out)
        raise
    write_outputs(tables, manifest, out)
    return manifest


def _threshold(config: ExperimentConfig) -> float:
    # Default separates macroscopic cascades from 1/N single-particle steps.
    if config.jump_threshold is not None:
        return float(config.jump_threshold)
    return min(0.5, 10.0 / config.params.n_particles)


def _run_kappa_sweep(config, tables, manifest, threads) -> None:
    params = config.params
    stream = RngStream(config.seed)
    jobs = {
        f"kappa_{k:g}": (lambda k=k: simulate_elastic(_with(params, kappa=k), stream))
        for k in config.kappas
    }
    if config.include_absorbing:
        jobs["absorbing"] = lambda: simulate_absorbing(
            _with(params, kappa=0.0), stream, shift=0.0
        )
    outputs = _run_many(jobs, threads)
    curves = {tag: outputs[tag].loss_curve for tag in jobs}
    thr = _threshold(config)
    jump_rows = []
    for tag, curve in curves.items():
        tables[f"loss_{tag}.csv"] = _loss_table(curve)
        jump_rows += _jump_rows(curve, tag, thr)
    tables["distances.csv"] = (["param_a", "param_b", "levy", "sup"], _distance_rows(curves))
    tables["jumps.csv"] = (["t", "size", "param"], jump_rows)
    ordered = [curves[f"kappa_{k:g}"].values for k in config.kappas]
    if config.include_absorbing:
        ordered.append(curves["absorbing"].values)
    manifest.flags["kappa_monotone"] = bool(
        all(np.all(lo <= hi) for lo, hi in zip(ordered, ordered[1:]))
    )


def _run_n_sweep(config, tables, manifest, threads) -> None:
    params = config.params
    stream = RngStream(config.seed)
    jobs = {
        f"N_{n}": (lambda n=n: simulate_elastic(_with(params, n_particles=n), stream))
        for n in config.n_list
    }
    outputs = _run_many(jobs, threads)
    curves = {tag: outputs[tag].loss_curve for tag in jobs}
    for tag, curve in curves.items():
        tables[f"loss_{tag}.csv"] = _loss_table(curve)
    ref_tag = f"N_{max(config.n_list)}"
    rows = [
        (tag, ref_tag, levy_metric(curves[tag], curves[ref_tag]),
         sup_distance(curves[tag], curves[ref_tag]))
        for tag in curves
        if tag != ref_tag
    ]
    tables["distances.csv"] = (["param_a", "param_b", "levy", "sup"], rows)
    dists = [r[2] for r in rows]
    manifest.flags["n_cauchy_decreasing"] = bool(
        all(a >= b for a, b in zip(dists, dists[1:]))
    )


def _run_blowup_demo(config, tables, manifest, threads) -> None:
    stream = RngStream(config.seed)
    output = simulate_elastic(config.params, stream)
    thr = _threshold(config)
    tables["loss_particle.csv"] = _loss_table(output.loss_curve)
    tables["jumps.csv"] = (
        ["t", "size", "param"],
        _jump_rows(output.loss_curve, f"alpha_{config.params.alpha:g}", thr),
    )
    manifest.flags["largest_jump"] = output.largest_jump
    manifest.flags["n_cascades"] = output.n_cascades


def _run_picard_vs_particle(config, tables, manifest, threads) -> None:
    stream = RngStream(config.seed)
    jobs = {
        "particle": lambda: simulate_elastic(config.params, stream),
        "picard": lambda: picard_solve(config.params, config.picard, stream.child(1000)),
    }
    outputs = _run_many(jobs, threads)
    particle: SimOutput = outputs["particle"]
    report = outputs["picard"]
    curves = {"picard": report.final, "particle": particle.loss_curve}
    tables["loss_picard.csv"] = _loss_table(report.final)
    tables["loss_particle.csv"] = _loss_table(particle.loss_curve)
    tables["distances.csv"] = (["param_a", "param_b", "levy", "sup"], _distance_rows(curves))
    manifest.flags["picard_converged"] = report.converged
    manifest.flags["picard_iterations"] = len(report.sup_distances)


def _run_pde_compare(config, tables, manifest, threads) -> None:
    params = config.params
    pde_cfg = dict(config.pde)
    grid = PdeGrid(
        x_max=float(pde_cfg.get("x_max", 4.0)),
        nx=int(pde_cfg.get("nx", 400)),
        dt=float(pde_cfg.get("dt", params.grid.dt)),
        t_end=params.grid.t_end,
    )
    mollify = pde_cfg.get("mollify_width")
    snapshot_every = int(pde_cfg.get("snapshot_every", max(1, grid.n_steps // 4)))
    bin_width = float(pde_cfg.get("bin_width", 4 * grid.dx))

    v0 = initial_density_for_law(params.law, grid, mollify)
    stream = RngStream(config.seed)
    n_snaps = grid.n_steps // snapshot_every + 1
    snap_times = [min(snapshot_every * i * grid.dt, grid.t_end) for i in range(n_snaps + 1)]
    snap_nodes = sorted({int(round(t / params.grid.dt)) for t in snap_times})

    jobs = {
        "pde": lambda: pde_solve(params, grid, v0, snapshot_every=snapshot_every),
        "particle": lambda: simulate_elastic(params, stream, snapshot_nodes=snap_nodes),
    }
    outputs = _run_many(jobs, threads)
    pde_result = outputs["pde"]
    particle = outputs["particle"]

    curves = {"pde": pde_result.loss_curve, "particle": particle.loss_curve}
    tables["loss_pde.csv"] = _loss_table(pde_result.loss_curve)
    tables["loss_particle.csv"] = _loss_table(particle.loss_curve)
    tables["distances.csv"] = (["param_a", "param_b", "levy", "sup"], _distance_rows(curves))

    xs = grid.xs()
    pde_rows = [
        (snap.time, x, v) for snap in pde_result.snapshots for x, v in zip(xs, snap.v)
    ]
    tables["density_pde.csv"] = (["t", "x", "v"], pde_rows)
    particle_rows = []
    for node in snap_nodes:
        hist = empirical_density(particle, node, bin_width)
        centers = 0.5 * (hist.edges[:-1] + hist.edges[1:])
        t = node * params.grid.dt
        particle_rows += [
            (t, x, m / bin_width) for x, m in zip(centers, hist.masses)
        ]
    tables["density_particle.csv"] = (["t", "x", "v"], particle_rows)
    manifest.flags["pde_mass_defect_max"] = float(np.max(np.abs(pde_result.mass_defect)))
    manifest.flags["pde_warnings"] = pde_result.warnings


def _with(params: ModelParams, **kw) -> ModelParams:
    from dataclasses import replace

    return replace(params, **kw)
