"""PNG figures written next to the CSV reports. matplotlib is imported lazily."""

from __future__ import annotations

from typing import Sequence

CYCLE_PARTS = ("format_conversion_cycles", "compute_cycles", "distribution_cycles",
               "reduction_cycles", "dram_cycles")


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    fig.clf()


def plot_cycle_breakdown(rows: Sequence[dict], path) -> None:
    """Grouped bars of the cycle categories per layer."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * len(rows) + 2), 3.5))
    width = 0.8 / len(CYCLE_PARTS)
    xs = range(len(rows))
    for i, part in enumerate(CYCLE_PARTS):
        ax.bar([x + i * width for x in xs], [float(r[part]) for r in rows], width,
               label=part.replace("_cycles", "").replace("_", " "))
    ax.set_xticks([x + 0.4 - width / 2 for x in xs])
    ax.set_xticklabels([str(r["layer"]) for r in rows], rotation=45, ha="right")
    ax.set_ylabel("cycles")
    ax.legend(fontsize=7)
    _save(fig, path)
    plt.close(fig)


def plot_format_crossover(rows: Sequence[dict], path) -> None:
    """Footprint of each format normalised to the uncompressed size, per mode."""
    plt = _pyplot()
    modes = sorted({r["mode"] for r in rows}, key=lambda m: -int(m[3:]))
    fig, axes = plt.subplots(1, len(modes), figsize=(4 * len(modes), 3.2), squeeze=False)
    for ax, mode in zip(axes[0], modes):
        sub = [r for r in rows if r["mode"] == mode]
        sr = [float(r["sr"]) for r in sub]
        for fmt in ("none", "coo", "csr", "bitmap"):
            ax.plot(sr, [float(r[f"{fmt}_norm"]) for r in sub], label=fmt.upper())
        ax.set_title(mode)
        ax.set_xlabel("sparsity ratio (%)")
        ax.set_ylabel("footprint / uncompressed")
        ax.legend(fontsize=7)
    _save(fig, path)
    plt.close(fig)


def plot_sweep(rows: Sequence[dict], axis: str, path, metric: str = "total_cycles") -> None:
    plt = _pyplot()
    ok = [r for r in rows if r.get("status") == "ok"]
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.plot([str(r[axis]) for r in ok], [float(r[metric]) for r in ok], marker="o")
    ax.set_xlabel(axis)
    ax.set_ylabel(metric.replace("_", " "))
    _save(fig, path)
    plt.close(fig)


def plot_access_stats(stats, path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.2))
    levels = [s.level for s in stats]
    ax.plot(levels, [s.naive_reads for s in stats], marker="o", label="naive")
    ax.plot(levels, [s.dedup_reads for s in stats], marker="s", label="coalesced")
    ax.set_xlabel("level")
    ax.set_ylabel("table reads")
    ax.legend(fontsize=7)
    _save(fig, path)
    plt.close(fig)
