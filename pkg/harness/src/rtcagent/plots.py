"""Static comparison plots from evaluation artifacts.

plot_scenario() reads the per-seed feature CSVs that evaluate() wrote and
renders two PNGs per scenario: a six-panel time-series overlay of agent
versus GCC on one seed, and a per-seed bar chart of cumulative received
megabytes across all seeds.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

FEATURES = ("rx_rate_mbps", "goodput_mbps", "rtt_ms", "plr_window_pct",
            "target_mbps", "rx_total_mbytes")

FEATURE_LABELS = {
    "rx_rate_mbps": "received rate (Mbps)",
    "goodput_mbps": "goodput (Mbps)",
    "rtt_ms": "RTT (ms)",
    "plr_window_pct": "windowed loss (%)",
    "target_mbps": "target bitrate (Mbps)",
    "rx_total_mbytes": "cumulative received (MB)",
}


def _read_csv(path: Path) -> dict[str, list[float]]:
    columns: dict[str, list[float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            for key, value in row.items():
                columns.setdefault(key, []).append(float(value))
    return columns


def plot_scenario(report_dir, scenario: str, *,
                  out_dir=None) -> list[Path]:
    """Render the PNGs for one scenario; returns the written paths."""
    report_dir = Path(report_dir)
    out = Path(out_dir) if out_dir is not None else report_dir
    out.mkdir(parents=True, exist_ok=True)
    with open(report_dir / f"report_{scenario}.json",
              encoding="utf-8") as fh:
        report = json.load(fh)
    seeds = report["seeds"]
    has_agent = "agent_mean" in report
    written = []

    first = seeds[0]
    gcc = _read_csv(report_dir / f"{scenario}_seed{first}_gcc.csv")
    agent = _read_csv(report_dir / f"{scenario}_seed{first}_agent.csv") \
        if has_agent else None
    fig, axes = plt.subplots(2, 3, figsize=(15, 8), sharex=True)
    for ax, feature in zip(axes.flat, FEATURES):
        ax.plot(gcc["t_s"], gcc[feature], label="gcc", color="tab:blue")
        if agent is not None:
            ax.plot(agent["t_s"], agent[feature], label="agent",
                    color="tab:orange")
        ax.set_title(FEATURE_LABELS[feature])
        ax.set_xlabel("time (s)")
        ax.grid(True, alpha=0.3)
    axes.flat[0].legend()
    fig.suptitle(f"{scenario}, seed {first}: agent vs gcc")
    fig.tight_layout()
    path = out / f"{scenario}_features.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(8, 4.5))
    xs = range(len(seeds))
    gcc_mb = [e["gcc"]["rx_total_mbytes"] for e in report["per_seed"]]
    width = 0.38
    ax.bar([x - width / 2 for x in xs], gcc_mb, width, label="gcc",
           color="tab:blue")
    if has_agent:
        agent_mb = [e["agent"]["rx_total_mbytes"]
                    for e in report["per_seed"]]
        ax.bar([x + width / 2 for x in xs], agent_mb, width, label="agent",
               color="tab:orange")
    ax.set_xticks(list(xs), [str(s) for s in seeds])
    ax.set_xlabel("seed")
    ax.set_ylabel("cumulative received (MB)")
    ax.set_title(f"{scenario}: received megabytes per seed")
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    path = out / f"{scenario}_mbytes.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    written.append(path)
    return written


def plot_training_curve(curve_csv, out_path) -> Path:
    """Episode returns over training, one line per scenario."""
    rows: list[dict] = []
    with open(curve_csv, newline="", encoding="utf-8") as fh:
        rows.extend(csv.DictReader(fh))
    fig, ax = plt.subplots(figsize=(9, 5))
    for scenario in sorted({r["scenario"] for r in rows}):
        sub = [r for r in rows if r["scenario"] == scenario]
        ax.plot([int(r["end_step"]) for r in sub],
                [float(r["return"]) for r in sub],
                marker=".", linestyle="-", alpha=0.8, label=scenario)
    ax.set_xlabel("environment step")
    ax.set_ylabel("episode return")
    ax.set_title("training curve")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return out_path
