"""Load experiment output directories and render the standard figures.

Figure kinds:
  * ``loss_family``    -- every ``loss_*.csv`` on one axis
  * ``distance_decay`` -- the Levy/sup distance table as grouped bars
  * ``jump_zoom``      -- loss curves zoomed around the largest jump
  * ``density_overlay``-- PDE vs particle density profiles

Inputs are never modified; each figure writes a ``<name>.json`` sidecar
holding exactly the plotted series (sorted keys, fixed layout), so a
re-render from the same CSVs is byte-identical.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

__all__ = [
    "FIGURE_KINDS",
    "FigureSpec",
    "SchemaError",
    "load_run",
    "render_figures",
]

FIGURE_KINDS = ("loss_family", "distance_decay", "jump_zoom", "density_overlay")

# Expected header per table name (loss tables are matched by prefix).
_HEADERS = {
    "loss": ["t", "lambda"],
    "distances.csv": ["param_a", "param_b", "levy", "sup"],
    "jumps.csv": ["t", "size", "param"],
    "density_pde.csv": ["t", "x", "v"],
    "density_particle.csv": ["t", "x", "v"],
}


class SchemaError(ValueError):
    """The manifest or a CSV table does not match the expected schema."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    inputs: tuple[str, ...]
    output: Path
    sidecar: Path
    x_label: str
    y_label: str
    format: str = "png"


@dataclass
class RunData:
    directory: Path
    manifest: dict
    losses: dict[str, dict]  # tag -> {"t": [...], "lambda": [...]}
    distances: list[dict] = field(default_factory=list)
    jumps: Optional[list[dict]] = None  # None: no jumps.csv shipped
    densities: dict[str, list[dict]] = field(default_factory=dict)


def _expected_header(name: str) -> Optional[list[str]]:
    if name.startswith("loss_") and name.endswith(".csv"):
        return _HEADERS["loss"]
    return _HEADERS.get(name)


def _read_table(path: Path, header: list[str]) -> list[dict]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != header:
        raise SchemaError(
            f"{path.name}: expected header {header}, found {rows[0] if rows else 'nothing'}"
        )
    out = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise SchemaError(f"{path.name}:{i}: expected {len(header)} fields")
        rec = {}
        for key, value in zip(header, row):
            if key in ("param", "param_a", "param_b"):
                rec[key] = value
            else:
                try:
                    rec[key] = float(value)
                except ValueError:
                    raise SchemaError(
                        f"{path.name}:{i}: field {key!r} is not numeric: {value!r}"
                    ) from None
        out.append(rec)
    return out


def load_run(manifest_path) -> RunData:
    """Parse run.json and every inventoried CSV, validating the schema."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise SchemaError(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise SchemaError(f"run.json is not valid JSON: {e}") from None
    if not isinstance(manifest, dict) or not isinstance(manifest.get("inventory"), list):
        raise SchemaError("run.json must be an object with an 'inventory' list")

    directory = manifest_path.parent
    run = RunData(directory=directory, manifest=manifest, losses={})
    for entry in manifest["inventory"]:
        if not isinstance(entry, dict) or "file" not in entry:
            raise SchemaError(f"malformed inventory entry: {entry!r}")
        name = entry["file"]
        path = directory / name
        if not path.exists():
            raise SchemaError(f"inventoried file missing on disk: {name}")
        header = _expected_header(name)
        if header is None:
            continue  # unknown tables are allowed, just not plotted
        rows = _read_table(path, header)
        if name.startswith("loss_"):
            tag = name[len("loss_"):-len(".csv")]
            run.losses[tag] = {
                "t": [r["t"] for r in rows],
                "lambda": [r["lambda"] for r in rows],
            }
        elif name == "distances.csv":
            run.distances = rows
        elif name == "jumps.csv":
            run.jumps = rows
        else:
            run.densities[name[len("density_"):-len(".csv")]] = rows
    return run


def _tag_order(tag: str):
    """Sort loss tags by their numeric parameter value when one is embedded
    (e.g. kappa_0.5 < kappa_2 < kappa_10); purely named tags come last."""
    parts = tag.rsplit("_", 1)
    if len(parts) == 2:
        try:
            return (0, parts[0], float(parts[1]))
        except ValueError:
            pass
    return (1, tag, 0.0)


def _sorted_tags(run: RunData) -> list[str]:
    return sorted(run.losses, key=_tag_order)


def _write_sidecar(path: Path, kind: str, series: dict) -> None:
    doc = {"kind": kind, "series": series}
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _finish(fig, ax, spec: FigureSpec) -> None:
    ax.set_xlabel(spec.x_label)
    ax.set_ylabel(spec.y_label)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(spec.output, format=spec.format)
    plt.close(fig)


def _render_loss_family(run: RunData, spec: FigureSpec) -> dict:
    fig, ax = plt.subplots(figsize=(6, 4))
    for tag in _sorted_tags(run):
        curve = run.losses[tag]
        ax.step(curve["t"], curve["lambda"], where="post", label=tag)
    _finish(fig, ax, spec)
    return {tag: run.losses[tag] for tag in _sorted_tags(run)}


def _render_distance_decay(run: RunData, spec: FigureSpec) -> dict:
    pairs = [f"{r['param_a']}|{r['param_b']}" for r in run.distances]
    levy = [r["levy"] for r in run.distances]
    sup = [r["sup"] for r in run.distances]
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = range(len(pairs))
    ax.bar([x - 0.2 for x in xs], levy, width=0.4, label="levy")
    ax.bar([x + 0.2 for x in xs], sup, width=0.4, label="sup")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(pairs, rotation=30, ha="right", fontsize=7)
    ax.set_yscale("log" if min(levy + sup, default=0) > 0 else "linear")
    _finish(fig, ax, spec)
    return {"pairs": pairs, "levy": levy, "sup": sup}


def _largest_jump(run: RunData) -> tuple[float, float]:
    """(time, size) of the largest jump: from jumps.csv when it has rows,
    otherwise from the largest increment of the loss curves."""
    if run.jumps:
        best = max(run.jumps, key=lambda r: r["size"])
        return best["t"], best["size"]
    best_t, best_size = 0.0, 0.0
    for curve in run.losses.values():
        lam = curve["lambda"]
        prev = 0.0
        for t, v in zip(curve["t"], lam):
            if v - prev > best_size:
                best_t, best_size = t, v - prev
            prev = v
    return best_t, best_size


def _render_jump_zoom(run: RunData, spec: FigureSpec) -> dict:
    t_jump, size = _largest_jump(run)
    horizon = max(max(c["t"]) for c in run.losses.values())
    half = max(0.05 * horizon, 1e-9)
    lo, hi = t_jump - half, t_jump + half
    series: dict = {"jump_time": t_jump, "jump_size": size}
    fig, ax = plt.subplots(figsize=(6, 4))
    for tag in _sorted_tags(run):
        curve = run.losses[tag]
        pts = [
            (t, v) for t, v in zip(curve["t"], curve["lambda"]) if lo <= t <= hi
        ]
        series[tag] = {"t": [p[0] for p in pts], "lambda": [p[1] for p in pts]}
        if pts:
            ax.step(*zip(*pts), where="post", label=tag)
    ax.axvline(t_jump, linestyle=":", linewidth=0.8, color="gray", label="largest jump")
    _finish(fig, ax, spec)
    return series


def _render_density_overlay(run: RunData, spec: FigureSpec) -> dict:
    series = {}
    fig, ax = plt.subplots(figsize=(6, 4))
    for source in sorted(run.densities):
        rows = run.densities[source]
        t_last = max(r["t"] for r in rows)
        sel = [r for r in rows if r["t"] == t_last]
        xs = [r["x"] for r in sel]
        vs = [r["v"] for r in sel]
        series[source] = {"t": t_last, "x": xs, "v": vs}
        if source == "particle":
            ax.plot(xs, vs, "o", markersize=2.5, label=f"{source} (t={t_last:g})")
        else:
            ax.plot(xs, vs, label=f"{source} (t={t_last:g})")
    _finish(fig, ax, spec)
    return series


def render_figures(
    manifest_path, out_dir, *, fmt: str = "png", kinds=None
) -> tuple[list[FigureSpec], list[str]]:
    """Render every applicable figure kind; returns (specs, notices).

    Kinds whose inputs are absent are filtered out silently; an empty
    jumps table skips jump_zoom with an explicit notice.
    """
    if fmt not in ("png", "svg"):
        raise ValueError(f"format must be 'png' or 'svg', got {fmt!r}")
    run = load_run(manifest_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    wanted = FIGURE_KINDS if kinds is None else tuple(kinds)

    notices: list[str] = []
    rendered: list[FigureSpec] = []

    def spec_for(kind: str, inputs, x_label, y_label) -> FigureSpec:
        return FigureSpec(
            kind=kind,
            inputs=tuple(sorted(inputs)),
            output=out / f"{kind}.{fmt}",
            sidecar=out / f"{kind}.json",
            x_label=x_label,
            y_label=y_label,
            format=fmt,
        )

    loss_files = [f"loss_{tag}.csv" for tag in _sorted_tags(run)]
    for kind in wanted:
        if kind == "loss_family" and run.losses:
            spec = spec_for(kind, loss_files, "t", "loss")
            series = _render_loss_family(run, spec)
        elif kind == "distance_decay" and run.distances:
            spec = spec_for(kind, ["distances.csv"], "pair", "distance")
            series = _render_distance_decay(run, spec)
        elif kind == "jump_zoom" and run.losses:
            if run.jumps is not None and not run.jumps:
                notices.append("jump_zoom skipped: jumps.csv has no rows")
                continue
            inputs = loss_files + (["jumps.csv"] if run.jumps else [])
            spec = spec_for(kind, inputs, "t", "loss")
            series = _render_jump_zoom(run, spec)
        elif kind == "density_overlay" and len(run.densities) >= 2:
            spec = spec_for(
                kind, ["density_pde.csv", "density_particle.csv"], "x", "density"
            )
            series = _render_density_overlay(run, spec)
        else:
            continue
        _write_sidecar(spec.sidecar, kind, series)
        rendered.append(spec)
    return rendered, notices
