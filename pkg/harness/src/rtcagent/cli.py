"""Command-line entry points: train, evaluate, plot."""

from __future__ import annotations

import argparse
import logging
import sys

from .evaluate import evaluate
from .plots import plot_scenario, plot_training_curve
from .reward import RewardSpec
from .train import TrainConfig, Trainer, TrainingAborted

log = logging.getLogger("rtcagent")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rtcagent",
        description="Train and evaluate a SAC bitrate controller against "
                    "the simulator's control bridge")
    sub = parser.add_subparsers(dest="command", required=True)

    train_p = sub.add_parser("train", help="train a policy")
    train_p.add_argument("--out", required=True,
                         help="artifact directory (policy, curve, summary)")
    train_p.add_argument("--steps", type=int, default=15_000,
                         help="total environment steps")
    train_p.add_argument("--seed", type=int, default=0)
    train_p.add_argument("--scenarios", default="easy,moderate",
                         help="comma-separated training scenarios")
    train_p.add_argument("--episode-duration", type=float, default=60.0,
                         help="episode length in simulated seconds")
    train_p.add_argument("--interval", type=float, default=1.0,
                         help="decision interval in simulated seconds")
    train_p.add_argument("--envs", type=int, default=1,
                         help="parallel simulator processes")
    train_p.add_argument("--start-random", type=int, default=1_000,
                         help="uniform-random warmup steps")
    train_p.add_argument("--resume", default=None,
                         help="checkpoint to resume from")

    eval_p = sub.add_parser("evaluate",
                            help="run a policy and GCC on the same seeds")
    eval_p.add_argument("--policy", required=True,
                        help="path to policy.pt, or 'gcc' for baseline only")
    eval_p.add_argument("--scenario", required=True)
    eval_p.add_argument("--seeds", default="1,2,3,4,5",
                        help="comma-separated seeds")
    eval_p.add_argument("--out", required=True)
    eval_p.add_argument("--duration", type=float, default=None,
                        help="override episode duration in seconds")
    eval_p.add_argument("--interval", type=float, default=1.0)

    plot_p = sub.add_parser("plot", help="render PNGs from artifacts")
    plot_p.add_argument("--report-dir", required=True,
                        help="directory holding report_<scenario>.json")
    plot_p.add_argument("--scenario", required=True)
    plot_p.add_argument("--curve", default=None,
                        help="optional training_curve.csv to plot as well")
    plot_p.add_argument("--out", default=None,
                        help="output directory (defaults to report dir)")
    return parser


def cmd_train(args) -> int:
    cfg = TrainConfig(
        scenarios=tuple(s.strip() for s in args.scenarios.split(",")
                        if s.strip()),
        total_steps=args.steps,
        episode_duration_s=args.episode_duration,
        decision_interval_s=args.interval,
        seed=args.seed,
        n_envs=args.envs,
        start_random_steps=args.start_random,
    )
    trainer = Trainer(cfg, args.out, resume_from=args.resume)
    try:
        summary = trainer.run()
    except TrainingAborted as exc:
        log.error("%s", exc)
        print(f"training aborted; resume with --resume "
              f"{exc.checkpoint_path}", file=sys.stderr)
        return 1
    print(f"trained {summary['total_steps']} steps "
          f"({summary['episodes_finished']} episodes) "
          f"in {summary['wall_time_s']:.0f}s; "
          f"policy at {summary['policy_path']}")
    return 0


def cmd_evaluate(args) -> int:
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    report = evaluate(args.policy, args.scenario, seeds, args.out,
                      duration_s=args.duration,
                      decision_interval_s=args.interval)
    gcc_mb = report["gcc_mean"]["rx_total_mbytes"]
    line = f"{args.scenario}: gcc {gcc_mb:.1f} MB"
    if "agent_mean" in report:
        line += (f", agent {report['agent_mean']['rx_total_mbytes']:.1f} MB"
                 f" (ratio {report['mbytes_ratio_agent_over_gcc']:.2f})")
    print(line)
    return 0


def cmd_plot(args) -> int:
    written = plot_scenario(args.report_dir, args.scenario,
                            out_dir=args.out)
    if args.curve:
        out = args.out if args.out else args.report_dir
        written.append(plot_training_curve(
            args.curve, f"{out}/training_curve.png"))
    for path in written:
        print(path)
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    handlers = {"train": cmd_train, "evaluate": cmd_evaluate,
                "plot": cmd_plot}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
