"""CSV, plot and manifest output for simulation results."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import IoError

__all__ = [
    "RunManifest",
    "csv_header",
    "emit_csv",
    "read_csv",
    "emit_plots",
    "write_manifest",
    "write_gainset",
    "PLOT_FAMILIES",
]

PLOT_FAMILIES = {
    "err_eta": "state estimate error",
    "err_omega": "frequency estimate error",
    "err_E": "output matrix estimate error",
    "err_track": "tracking error",
}


@dataclass
class RunManifest:
    scenario: str
    config_hash: str
    seed: int
    version: str
    outputs: dict = field(default_factory=dict)

    def as_dict(self):
        return asdict(self)


def csv_header(n_nodes):
    cols = ["t"]
    for i in range(1, n_nodes + 1):
        cols += [f"err_eta_{i}", f"err_omega_{i}", f"err_E_{i}", f"err_track_{i}"]
    cols.append("V")
    cols += [f"V_{i}" for i in range(1, n_nodes + 1)]
    return cols


def _fmt(x):
    return format(float(x), ".12g")


def emit_csv(result, path):
    """Write one row per recorded time with 12 significant digits.

    Columns: ``t``; per node ``err_eta_i, err_omega_i, err_E_i, err_track_i``;
    then ``V`` and ``V_1 .. V_N``. Missing quantities are written as ``nan``.
    """
    path = Path(path)
    n = result.err_eta.shape[1]
    s = result.series
    k = result.times.shape[0]
    v_i = s.get("V_i", np.full((k, n), np.nan))
    v = s.get("V", np.full(k, np.nan))
    lines = [",".join(csv_header(n))]
    for r in range(k):
        row = [_fmt(result.times[r])]
        for i in range(n):
            row += [_fmt(s["err_eta"][r, i]), _fmt(s["err_omega"][r, i]),
                    _fmt(s["err_E"][r, i]), _fmt(s["err_track"][r, i])]
        row.append(_fmt(v[r]))
        row += [_fmt(v_i[r, i]) for i in range(n)]
        lines.append(",".join(row))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path):
    """Return ``(header, data)`` from a file written by :func:`emit_csv`."""
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    data = np.array([[float(x) for x in row] for row in rows]) if rows \
        else np.empty((0, len(header)))
    return header, data


def emit_plots(result, path_prefix, log_scale=True, families=None):
    """One SVG per error family, one line per follower.

    Families with no finite data produce an empty set of axes. Returns the
    list of written paths.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    prefix = Path(path_prefix)
    try:
        prefix.parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {prefix.parent}: {exc}") from exc
    written = []
    families = families or list(PLOT_FAMILIES)
    with matplotlib.rc_context({"svg.hashsalt": "coopobs", "svg.fonttype": "none"}):
        for name in families:
            fig, ax = plt.subplots(figsize=(6, 3.5))
            data = result.series.get(name)
            t = result.times
            if data is not None and np.size(data) and np.isfinite(data).any():
                data = np.asarray(data, dtype=float)
                for i in range(data.shape[1]):
                    y = data[:, i]
                    if log_scale:
                        y = np.where(y > 0, y, np.nan)
                    ax.plot(t, y, lw=1.0, label=f"follower {i + 1}")
                ax.legend(fontsize=7)
                if log_scale:
                    ax.set_yscale("log")
            ax.set_xlabel("t [s]")
            ax.set_ylabel(PLOT_FAMILIES.get(name, name))
            ax.grid(True, which="both", alpha=0.3)
            fig.tight_layout()
            out = prefix.parent / f"{prefix.name}_{name}.svg"
            try:
                fig.savefig(out, format="svg", metadata={"Date": None})
            except OSError as exc:
                raise IoError(f"cannot write {out}: {exc}") from exc
            finally:
                plt.close(fig)
            written.append(out)
    return written


def write_manifest(manifest, path):
    path = Path(path)
    path.write_text(json.dumps(manifest.as_dict(), indent=2, sort_keys=True) + "\n")
    return path


def write_gainset(gainset, path, certificates=None):
    """Structured-text (YAML) dump, matrices row-major with 12 significant digits."""
    import yaml

    def mat(a):
        return [[float(_fmt(x)) for x in row] for row in np.atleast_2d(a)]

    doc = {k: mat(getattr(gainset, k)) for k in ("h", "d", "w", "p", "q", "b", "h_bar")}
    doc["constants"] = {k: float(_fmt(v)) for k, v in vars(gainset.constants).items()}
    if certificates is not None:
        doc["certificates"] = {k: bool(v) for k, v in certificates.items()}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(doc, sort_keys=False, default_flow_style=None))
    return path
