"""Side-by-side evaluation of a trained policy against the built-in GCC.

Both arms run the same scenario on the same seeds, so the channel
realization is identical and differences come from the controller alone.
The agent arm drives bridge episodes with the deterministic (mean) policy;
the GCC arm runs the simulator CLI with its native controller and reads
the artifacts it writes. Every seed produces one per-second feature CSV
per arm, and the run ends with an aggregate JSON table that embeds the
reward weights used, so a report is interpretable on its own.

The six features tracked per second for both arms:
rx_rate_mbps, goodput_mbps, rtt_ms, plr_window_pct, target_mbps, and
cumulative rx_total_mbytes.
"""

from __future__ import annotations

import csv
import json
import subprocess
import sys
import tempfile
from pathlib import Path

from .adapter import NormBounds, action_to_bps, observation_vector
from .protocol import SimulatorProcess
from .reward import RewardSpec
from .sac import SacAgent

FEATURE_COLUMNS = ("t_s", "rx_rate_mbps", "goodput_mbps", "rtt_ms",
                   "plr_window_pct", "target_mbps", "rx_total_mbytes")


def _write_rows(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=FEATURE_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def run_agent_seed(agent: SacAgent, proc: SimulatorProcess, scenario: str,
                   seed: int, *, duration_s: float | None = None,
                   decision_interval_s: float = 1.0,
                   bounds: NormBounds | None = None) -> tuple[list, dict]:
    """One deterministic-policy episode; returns (feature rows, summary)."""
    bounds = bounds if bounds is not None else NormBounds()
    rows = []
    mbytes = 0.0
    with proc.client() as client:
        reply = client.reset(scenario, seed, duration_s=duration_s,
                             decision_interval_s=decision_interval_s)
        while reply["type"] == "obs":
            mbytes += reply["rx_rate_bps"] * decision_interval_s / 8 / 1e6
            rows.append({
                "t_s": reply["sim_time_s"],
                "rx_rate_mbps": reply["rx_rate_bps"] / 1e6,
                "goodput_mbps": reply["goodput_bps"] / 1e6,
                "rtt_ms": reply["rtt_ms"],
                "plr_window_pct": 100.0 * reply["plr_window"],
                "target_mbps": reply["current_target_bps"] / 1e6,
                "rx_total_mbytes": round(mbytes, 6),
            })
            action = agent.act(observation_vector(reply, bounds),
                               deterministic=True)
            reply = client.act(reply["episode_id"], reply["step_id"],
                               action_to_bps(action))
    return rows, reply["summary"]


def run_gcc_seed(scenario: str, seed: int, *,
                 duration_s: float | None = None) -> tuple[list, dict]:
    """One native-controller run via the CLI; returns (rows, summary)."""
    with tempfile.TemporaryDirectory(prefix="rtcagent-gcc-") as tmp:
        cmd = [sys.executable, "-m", "rtcnetlab.cli", "run",
               "--scenario", scenario, "--seed", str(seed), "--out", tmp]
        if duration_s is not None:
            cmd += ["--duration", str(duration_s)]
        subprocess.run(cmd, check=True, stdout=subprocess.DEVNULL,
                       stderr=subprocess.DEVNULL)
        out = Path(tmp)
        with open(out / "summary.json", encoding="utf-8") as fh:
            summary = json.load(fh)
        rows = []
        with open(out / "metrics.csv", newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                rows.append({
                    "t_s": row["t_s"],
                    "rx_rate_mbps": row["rx_rate_mbps"],
                    "goodput_mbps": row["goodput_mbps"],
                    "rtt_ms": row["rtt_ms"],
                    "plr_window_pct": row["plr_window_pct"],
                    "target_mbps": row["target_bitrate_mbps"],
                    "rx_total_mbytes": row["rx_total_mbytes"],
                })
    return rows, summary


def _seed_stats(summary: dict) -> dict:
    agg = summary["aggregates"]
    return {
        "rx_total_mbytes": agg["rx_total_mbytes"],
        "rx_rate_mbps_mean": agg["rx_rate_mbps_mean"],
        "rtt_ms_mean": agg["rtt_ms_mean"],
        "playout_plr_pct": agg["playout_plr_pct"],
        "target_mbps_mean": agg["target_mbps_mean"],
    }


def _mean(values: list[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def evaluate(policy, scenario: str, seeds: list[int], out_dir, *,
             duration_s: float | None = None,
             decision_interval_s: float = 1.0,
             reward: RewardSpec | None = None) -> dict:
    """Run both arms on the given seeds and write CSVs plus a report.

    policy is a SacAgent, a path to a saved one, or the string "gcc" to
    evaluate the native controller against itself (useful as a baseline
    smoke check). Returns the aggregate report dict, which is also written
    to <out_dir>/report_<scenario>.json.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reward = reward if reward is not None else RewardSpec()
    agent = None
    if not (isinstance(policy, str) and policy == "gcc"):
        agent = policy if isinstance(policy, SacAgent) \
            else SacAgent.load(policy)

    per_seed = []
    agent_proc = None
    try:
        if agent is not None:
            agent_proc = SimulatorProcess().start()
        for seed in seeds:
            gcc_rows, gcc_summary = run_gcc_seed(scenario, seed,
                                                 duration_s=duration_s)
            _write_rows(out / f"{scenario}_seed{seed}_gcc.csv", gcc_rows)
            entry = {"seed": seed, "gcc": _seed_stats(gcc_summary)}
            if agent is not None:
                agent_rows, agent_summary = run_agent_seed(
                    agent, agent_proc, scenario, seed,
                    duration_s=duration_s,
                    decision_interval_s=decision_interval_s)
                _write_rows(out / f"{scenario}_seed{seed}_agent.csv",
                            agent_rows)
                entry["agent"] = _seed_stats(agent_summary)
            per_seed.append(entry)
    finally:
        if agent_proc is not None:
            agent_proc.stop()

    report = {
        "scenario": scenario,
        "seeds": list(seeds),
        "duration_s": duration_s,
        "decision_interval_s": decision_interval_s,
        "reward": reward.as_dict(),
        "per_seed": per_seed,
        "gcc_mean": {k: _mean([e["gcc"][k] for e in per_seed])
                     for k in per_seed[0]["gcc"]},
    }
    if agent is not None:
        report["agent_mean"] = {
            k: _mean([e["agent"][k] for e in per_seed])
            for k in per_seed[0]["agent"]}
        gcc_mb = report["gcc_mean"]["rx_total_mbytes"]
        agent_mb = report["agent_mean"]["rx_total_mbytes"]
        report["mbytes_ratio_agent_over_gcc"] = (
            agent_mb / gcc_mb if gcc_mb else 0.0)
    with open(out / f"report_{scenario}.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report
