"""Optional PNG rendering of output tables (``simulate --plot``)."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .output import Table

__all__ = ["plot_table"]


def _series(table: Table):
    """Split rows by the leading sweep column, if any."""
    data = np.array(table.rows, dtype=float)
    lead = table.columns[0]
    if lead in ("t_ns", "field_mK"):
        return [(None, data)]
    values = list(dict.fromkeys(data[:, 0]))
    return [(v, data[data[:, 0] == v][:, 1:]) for v in values]


def plot_table(table: Table, path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    cols = [c for c in table.columns if c in ("t_ns", "field_mK", "pop_gs", "pop_es", "pop_t", "chi_re", "chi_im", "corr_s1s2")]
    offset = 0 if table.columns[0] in ("t_ns", "field_mK") else 1
    idx = {c: table.columns.index(c) - offset for c in cols}
    label = table.columns[0] if offset else None
    series = _series(table)

    if table.name == "populations":
        fig, ax = plt.subplots(figsize=(6.4, 4.4))
        for value, d in series:
            ax.plot(d[:, idx["t_ns"]], d[:, idx["pop_t"]], label=None if value is None else f"{label}={value:g}")
        ax.set_xscale("log")
        ax.set_xlabel("time (ns)")
        ax.set_ylabel("triplet-manifold population")
    elif table.name == "spectrum":
        fig, ax = plt.subplots(figsize=(6.4, 4.4))
        for value, d in series:
            ax.plot(d[:, idx["field_mK"]], -d[:, idx["chi_im"]], label=None if value is None else f"{label}={value:g}")
        ax.set_xlabel("Zeeman energy (mK)")
        ax.set_ylabel(r"$-\mathrm{Im}\,\chi$")
    else:
        value, d = series[0]
        t = np.unique(d[:, idx["t_ns"]])
        f = np.unique(d[:, idx["field_mK"]])
        z = -d[:, idx["chi_im"]].reshape(t.size, f.size)
        fig, ax = plt.subplots(figsize=(6.4, 4.8))
        mesh = ax.pcolormesh(f, t, z, shading="nearest", cmap="RdBu_r")
        lim = np.abs(z).max() or 1.0
        mesh.set_clim(-lim, lim)
        ax.set_yscale("log")
        ax.set_xlabel("Zeeman energy (mK)")
        ax.set_ylabel("time (ns)")
        fig.colorbar(mesh, ax=ax, label=r"$-\mathrm{Im}\,\chi$")
        if value is not None:
            ax.set_title(f"{label}={value:g}")
    if table.name != "trepr" and len(series) > 1:
        ax.legend(frameon=False, fontsize="small")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
