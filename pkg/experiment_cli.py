"""
Experiment runner: trains and evaluates OLLA, SALAD and the RL agent over
(seed x realization) cells and writes plot-ready CSV tables.

    python experiment_cli.py run --method olla --scenario cell-3ue --seeds 3 --realizations 5
    python experiment_cli.py compare --config rl.cfg --config olla.cfg --reference olla
    python experiment_cli.py sweep-ke --values 0,0.025,0.1,0.5
    python experiment_cli.py fqi --dataset data/sample_dataset.csv

Exit codes: 0 success, 1 runtime error, 2 configuration or usage error.
The output root comes from LA_OUTPUT_ROOT.
"""
import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from baselines import BaselinePolicy
from channel_model import SinrTrace, generate, get_scenario, load_trace, trace_digest
from config import configure_logging, get_settings
from exceptions import ConfigError, LinkAdaptationError
from la_env import LinkAdaptationEnv, run_episode, slot_log_frame, write_slot_log
from mcs_catalog import get_catalog
from metrics import (
    delta_pct, recompute_mean_se, summarize, write_cdf_csv, write_comparison_csv,
    write_histogram_csv, write_summary_csv,
)
from offline_fqi import (
    extract_policy, fqi_train, load_dataset, total_variation, write_fqi_curve, write_fqi_policy,
)
from rl_agent import PolicyNetwork, act, load_checkpoint, save_checkpoint, train, write_training_curve
from schemas import (
    ComparisonRow, EnvConfig, ExperimentConfig, FqiConfig, FqiResponse, MetricsSummary,
    SchedulerConfig, TrainConfig,
)
from sinr_predictors import make_predictor

logger = logging.getLogger(__name__)

# training episodes draw realizations from a range disjoint from evaluation
TRAIN_REALIZATION_OFFSET = 100_000
KE_SWEEP = [0.0, 0.025, 0.1, 0.5]


# Configuration

def parse_config_file(path) -> dict:
    """Flat ``key=value`` file; ``#`` starts a comment, ``train.<field>`` sets TrainConfig"""
    values: dict = {}
    with open(path, encoding="utf-8") as handle:
        for number, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{number}: expected key=value, got '{line}'")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


def _seeds(value) -> List[int]:
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    text = str(value)
    if "," in text:
        return [int(v) for v in text.split(",") if v.strip()]
    return list(range(int(text)))


def build_config(values: dict) -> ExperimentConfig:
    """ExperimentConfig from flat string/typed values (file entries and CLI overrides)"""
    values = {k: v for k, v in values.items() if v is not None}
    settings = get_settings()
    params: dict = {
        "seeds": list(range(settings.DEFAULT_SEEDS)),
        "realizations": settings.DEFAULT_REALIZATIONS,
        "episode_slots": settings.EPISODE_SLOTS,
        "train_episodes": settings.TRAIN_EPISODES,
    }
    scheduler: dict = {}
    train_cfg: dict = {}
    for key, value in values.items():
        if key == "seeds":
            params["seeds"] = _seeds(value)
        elif key in ("scheduler", "scheduler_mode"):
            scheduler["mode"] = value
        elif key in ("pf_k", "pf_alpha"):
            scheduler[key[3:]] = value
        elif key.startswith("train."):
            train_cfg[key[len("train."):]] = value
        elif key == "setup" and str(value).lower() in ("none", "explicit"):
            params["setup"] = None
        elif key in ExperimentConfig.model_fields:
            params[key] = value
        else:
            raise ConfigError(f"unknown configuration key '{key}'")
    if "n_cqi" in params or "n_harq" in params:
        params.setdefault("setup", None)
    if scheduler:
        params["scheduler"] = SchedulerConfig(**scheduler)
    if train_cfg:
        params["train"] = TrainConfig(**train_cfg)
    return ExperimentConfig(**params)


def env_config(config: ExperimentConfig) -> EnvConfig:
    return EnvConfig(n_cqi=config.n_cqi, n_harq=config.n_harq, k_e=config.k_e, tau=config.tau,
                     scheduler=config.scheduler)


def load_cell_trace(config: ExperimentConfig, seed: int, realization: int) -> SinrTrace:
    if config.trace_path:
        return load_trace(config.trace_path, realization=realization)
    scenario = get_scenario(config.scenario, seed=seed, num_slots=config.episode_slots)
    return generate(scenario, realization)


def _episode_slots(config: ExperimentConfig, trace: SinrTrace) -> int:
    return min(config.episode_slots, trace.num_slots)


def _reset(config: ExperimentConfig, trace: SinrTrace, rng: np.random.Generator):
    cfg = env_config(config)
    env = LinkAdaptationEnv(cfg, get_catalog())
    predictor = make_predictor(
        config.predictor, horizon_slots=cfg.feedback.report_delay_slots,
        bler_model=cfg.bler, fallback_db=env.midpoint_db, catalog=env.catalog,
    )
    state = env.reset(trace, predictor, rng, num_slots=_episode_slots(config, trace))
    return env, state


def output_dir(config: ExperimentConfig) -> Path:
    if config.output_dir:
        return Path(config.output_dir)
    return Path(get_settings().OUTPUT_ROOT) / config.display_label


# Execution

def train_agent(config: ExperimentConfig, seed: int) -> Tuple[PolicyNetwork, List[float]]:
    """Train one agent for ``seed`` on realizations disjoint from evaluation"""
    if config.method != "rl":
        raise ConfigError(f"method '{config.method}' has no trainable agent")
    train_cfg = config.train.model_copy(update={"total_episodes": config.train_episodes, "seed": seed})

    def factory(episode: int, rng: np.random.Generator):
        trace = load_cell_trace(config, seed, TRAIN_REALIZATION_OFFSET + episode)
        return _reset(config, trace, rng)

    logger.info("Training %s (seed %d, %d episodes)", config.display_label, seed, train_cfg.total_episodes)
    return train(factory, train_cfg)


def run_cell(config: ExperimentConfig, seed: int, realization: int,
             net: Optional[PolicyNetwork] = None):
    """One evaluation episode; returns (records, trace digest, state_dim)"""
    trace = load_cell_trace(config, seed, realization)
    rng = np.random.default_rng([seed, realization])
    env, state = _reset(config, trace, rng)

    if config.method == "rl":
        if net is None:
            raise ConfigError("rl evaluation needs a trained policy")
        run_episode(env, state, lambda e, s, r: act(net, s, r, deterministic=True), rng)
    else:
        policy = BaselinePolicy(config.method, env.num_ues, env.config.bler, catalog=env.catalog)
        run_episode(env, state, lambda e, s, r: policy.act(e, r), rng, observe=policy.observe)

    window = trace.sinr_db[:, :env.num_slots]
    digest = trace_digest(SinrTrace(sinr_db=window, realization=trace.realization))
    return env.records, digest, env.state_dim


def _cell_job(args):
    return run_cell(*args)


def evaluate_cells(config: ExperimentConfig, nets: Dict[int, PolicyNetwork]):
    cells = [(seed, r) for seed in sorted(config.seeds) for r in range(config.realizations)]
    jobs = [(config, seed, r, nets.get(seed)) for seed, r in cells]
    workers = get_settings().NUM_WORKERS
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell_job, jobs))
    else:
        results = [_cell_job(job) for job in jobs]
    return cells, results


def _write_run_artifacts(config: ExperimentConfig, summary: MetricsSummary, logs, cells,
                         curves: Dict[int, List[float]], nets: Dict[int, PolicyNetwork]) -> Dict[str, str]:
    out = output_dir(config)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = {
        "summary": write_summary_csv([summary], out / "summary.csv"),
        "cdf_se": write_cdf_csv([summary], "se", out / "cdf_se.csv"),
        "cdf_bler": write_cdf_csv([summary], "bler", out / "cdf_bler.csv"),
        "cdf_mcs": write_cdf_csv([summary], "mcs", out / "cdf_mcs.csv"),
        "mcs_hist": write_histogram_csv([summary], out / "mcs_hist.csv"),
    }
    records = [r for log in logs for r in log]
    episode = [i for i, log in enumerate(logs) for _ in log]
    artifacts["slot_log"] = write_slot_log(records, out / "slot_log.csv", episode)

    if curves:
        seed = sorted(curves)[0]
        artifacts["training_curve"] = write_training_curve(curves[seed], out / "training_curve.csv")
        for s, net in sorted(nets.items()):
            artifacts[f"checkpoint_seed{s}"] = save_checkpoint(net, out / f"policy_seed{s}.pt", config.train)

    meta = {
        "label": summary.label,
        "config": config.model_dump(mode="json"),
        "state_dim": summary.state_dim,
        "cells": [{"seed": s, "realization": r, "trace_sha256": d}
                  for (s, r), d in zip(cells, summary.trace_digests)],
    }
    meta_path = out / "run_meta.json"
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")
    artifacts["run_meta"] = meta_path
    for name, path in artifacts.items():
        logger.info("Wrote %s: %s", name, path)
    return {name: str(path) for name, path in artifacts.items()}


def run(config: ExperimentConfig, nets: Optional[Dict[int, PolicyNetwork]] = None,
        write: bool = True) -> Tuple[MetricsSummary, Dict[str, str]]:
    """Full pipeline for every (seed x realization) cell"""
    logger.info("Run %s: method=%s predictor=%s k_E=%g seeds=%s realizations=%d",
                config.display_label, config.method, config.predictor, config.k_e,
                config.seeds, config.realizations)
    nets = dict(nets or {})
    curves: Dict[int, List[float]] = {}
    if config.method == "rl":
        for seed in sorted(config.seeds):
            if seed not in nets:
                nets[seed], curves[seed] = train_agent(config, seed)

    cells, results = evaluate_cells(config, nets)
    logs = [records for records, _, _ in results]
    digests = [digest for _, digest, _ in results]
    state_dim = results[0][2]

    summary = summarize(
        logs, label=config.display_label, method=config.method,
        num_ues=state_dim // env_config(config).per_ue_dim,
        predictor=config.predictor if config.method == "rl" else None,
        k_e=config.k_e, state_dim=state_dim, trace_digests=digests,
    )

    # independent cross-check against the slot log
    frame = slot_log_frame([r for log in logs for r in log])
    if not np.isclose(recompute_mean_se(frame), summary.mean_se, rtol=1e-12, atol=1e-12):
        raise LinkAdaptationError("summary mean SE disagrees with the slot log")

    artifacts = _write_run_artifacts(config, summary, logs, cells, curves, nets) if write else {}
    logger.info("Run %s done: mean SE %.4f, mean BLER %.4f", summary.label, summary.mean_se, summary.mean_bler)
    return summary, artifacts


def _check_paired(configs: Sequence[ExperimentConfig]) -> None:
    keys = {(c.scenario, c.trace_path, tuple(sorted(c.seeds)), c.realizations, c.episode_slots)
            for c in configs}
    if len(keys) > 1:
        raise ConfigError("compared configs must share scenario, trace, seeds, realizations and episode length")
    labels = [c.display_label for c in configs]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"compared configs need distinct labels, got {labels}")


def compare(configs: Sequence[ExperimentConfig], reference: str, write: bool = True,
            out: Optional[Path] = None) -> List[ComparisonRow]:
    """Paired comparison; ΔSE% of every config against ``reference`` (a label or a method)"""
    if len(configs) < 2:
        raise ConfigError("compare needs at least two configs")
    _check_paired(configs)

    summaries = [run(c, write=write)[0] for c in configs]
    digests = {tuple(s.trace_digests) for s in summaries}
    if len(digests) != 1:
        raise LinkAdaptationError("paired comparison consumed different channel traces")

    ref = next((s for s in summaries if s.label == reference), None)
    ref = ref or next((s for s in summaries if s.method == reference), None)
    if ref is None:
        raise ConfigError(f"reference '{reference}' matches no compared config")

    rows = [
        ComparisonRow(
            label=s.label, method=s.method, predictor=s.predictor, k_e=s.k_e,
            mean_se=s.mean_se, median_se=s.median_se, mean_bler=s.mean_bler,
            median_bler=s.median_bler, median_mcs=s.median_mcs,
            delta_se_pct=delta_pct(s.mean_se, ref.mean_se),
        )
        for s in summaries
    ]
    if write:
        target = out or Path(get_settings().OUTPUT_ROOT)
        logger.info("Wrote comparison: %s", write_comparison_csv(rows, target / "comparison.csv"))
    return rows


def sweep_ke(base: ExperimentConfig, values: Sequence[float] = KE_SWEEP, write: bool = True,
             out: Optional[Path] = None) -> List[MetricsSummary]:
    """One trained agent per k_E, shared seeds; writes table_ke.csv"""
    if base.method != "rl":
        raise ConfigError("k_E sweep applies to the rl method only")
    summaries = []
    for k_e in values:
        config = base.model_copy(update={"k_e": float(k_e), "label": None, "output_dir": None})
        if base.output_dir:
            config.output_dir = str(Path(base.output_dir) / config.display_label)
        summaries.append(run(config, write=write)[0])
    if write:
        target = out or (Path(base.output_dir) if base.output_dir else Path(get_settings().OUTPUT_ROOT))
        path = write_ke_table(summaries, target / "table_ke.csv")
        logger.info("Wrote k_E table: %s", path)
    return summaries


def write_ke_table(summaries: Sequence[MetricsSummary], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = ["k_e", "median_se", "median_bler", "median_mcs", "mean_se", "mean_bler"]
    frame = pd.DataFrame([s.model_dump(include=set(columns)) for s in summaries], columns=columns)
    frame.to_csv(path, index=False, float_format="%.10g")
    return path


def run_fqi(dataset_path, config: Optional[FqiConfig] = None, out: Optional[Path] = None) -> FqiResponse:
    config = config or FqiConfig()
    dataset = load_dataset(dataset_path)
    q, curve = fqi_train(dataset, config=config)
    learned, behavior = extract_policy(q, dataset)
    response = FqiResponse(
        samples=len(dataset),
        dropped_rows=dataset.dropped_rows,
        avg_q_curve=curve,
        learned_pct=(100.0 * learned).tolist(),
        behavior_pct=(100.0 * behavior).tolist(),
        tv_distance=total_variation(learned, behavior),
    )
    if out is not None:
        write_fqi_curve(curve, out / "fqi_curve.csv")
        write_fqi_policy(learned, behavior, out / "fqi_policy.csv")
        logger.info("Wrote FQI curve and policy to %s", out)
    return response


# Command line

def _add_experiment_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", dest="config_file", help="key=value experiment file")
    parser.add_argument("--label", help="row label (default: derived from method/predictor/k_E)")
    parser.add_argument("--method", choices=["olla", "salad", "rl"], help="link adaptation method (default rl)")
    parser.add_argument("--scenario", help="named channel scenario (default cell-3ue)")
    parser.add_argument("--trace", dest="trace_path", help="replay a slot,ue,sinr_db trace file")
    parser.add_argument("--predictor", choices=["oracle", "dcqi", "kf", "dt", "rf", "oco"],
                        help="SINR estimate for the rl state (default oracle)")
    parser.add_argument("--setup", choices=["A", "B", "none"], help="window setup: A=(3,10), B=(1,1) (default A)")
    parser.add_argument("--n-cqi", dest="n_cqi", type=int, help="explicit CQI window (with --setup none)")
    parser.add_argument("--n-harq", dest="n_harq", type=int, help="explicit HARQ window (with --setup none)")
    parser.add_argument("--k-e", dest="k_e", type=float, help="BLER penalty integral gain (default 0)")
    parser.add_argument("--tau", type=float, help="BLER target (default 0.1)")
    parser.add_argument("--seeds", help="seed count N or comma list (default LA_DEFAULT_SEEDS)")
    parser.add_argument("--realizations", type=int, help="evaluation realizations per seed (default 10)")
    parser.add_argument("--episode-slots", dest="episode_slots", type=int, help="slots per episode (default 1000)")
    parser.add_argument("--train-episodes", dest="train_episodes", type=int, help="training episodes (default 60)")
    parser.add_argument("--scheduler", choices=["all", "pf"], help="UE scheduler (default all)")
    parser.add_argument("--pf-k", dest="pf_k", type=int, help="UEs per slot under pf (default 1)")
    parser.add_argument("--output-dir", dest="output_dir", help="artifact directory")


def _experiment_from_args(args: argparse.Namespace, config_file: Optional[str] = None) -> ExperimentConfig:
    values = parse_config_file(config_file) if config_file else {}
    for key in ("label", "method", "scenario", "trace_path", "predictor", "setup", "n_cqi", "n_harq",
                "k_e", "tau", "seeds", "realizations", "episode_slots", "train_episodes",
                "scheduler", "pf_k", "output_dir"):
        value = getattr(args, key, None)
        if value is not None:
            values[key] = value
    return build_config(values)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="experiment_cli", description="Link adaptation experiments")
    parser.add_argument("--log-level", help="override LA_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="train (rl) and evaluate one configuration")
    _add_experiment_options(run_parser)

    train_parser = sub.add_parser("train", help="train rl agents and write checkpoints")
    _add_experiment_options(train_parser)

    eval_parser = sub.add_parser("evaluate", help="evaluate a saved rl checkpoint")
    _add_experiment_options(eval_parser)
    eval_parser.add_argument("--checkpoint", required=True, help="policy checkpoint file")

    compare_parser = sub.add_parser("compare", help="paired comparison of several configs")
    compare_parser.add_argument("--config", dest="configs", action="append", required=True,
                                help="experiment file (repeat for each config)")
    compare_parser.add_argument("--reference", required=True, help="label or method used as reference")
    compare_parser.add_argument("--output-dir", dest="output_dir", help="where comparison.csv goes")

    sweep_parser = sub.add_parser("sweep-ke", help="train/evaluate one rl agent per k_E")
    _add_experiment_options(sweep_parser)
    sweep_parser.add_argument("--values", default="0,0.025,0.1,0.5", help="comma-separated k_E values")

    fqi_parser = sub.add_parser("fqi", help="fitted Q-iteration on a logged dataset")
    fqi_parser.add_argument("--dataset", required=True, help="logged CSV file")
    fqi_parser.add_argument("--iterations", type=int, default=30, help="Bellman iterations (default 30)")
    fqi_parser.add_argument("--gamma", type=float, default=0.5, help="discount (default 0.5)")
    fqi_parser.add_argument("--seed", type=int, default=0, help="forest seed (default 0)")
    fqi_parser.add_argument("--output-dir", dest="output_dir", help="artifact directory")
    return parser


def _dispatch(args: argparse.Namespace) -> None:
    if args.command == "run":
        summary, _ = run(_experiment_from_args(args, args.config_file))
        print(summary.model_dump_json(include={"label", "mean_se", "mean_bler", "median_mcs", "state_dim"}))

    elif args.command == "train":
        config = _experiment_from_args(args, args.config_file)
        out = output_dir(config)
        for seed in sorted(config.seeds):
            net, curve = train_agent(config, seed)
            save_checkpoint(net, out / f"policy_seed{seed}.pt", config.train)
            write_training_curve(curve, out / f"training_curve_seed{seed}.csv")
        logger.info("Checkpoints written to %s", out)

    elif args.command == "evaluate":
        config = _experiment_from_args(args, args.config_file)
        if config.method != "rl":
            raise ConfigError("evaluate expects --method rl")
        net, meta = load_checkpoint(args.checkpoint)
        if meta["per_ue_dim"] != env_config(config).per_ue_dim:
            raise ConfigError(f"checkpoint expects per-UE features of length {meta['per_ue_dim']}")
        summary, _ = run(config, nets={seed: net for seed in config.seeds})
        print(summary.model_dump_json(include={"label", "mean_se", "mean_bler", "median_mcs"}))

    elif args.command == "compare":
        configs = [build_config(parse_config_file(path)) for path in args.configs]
        out = Path(args.output_dir) if args.output_dir else None
        for row in compare(configs, args.reference, out=out):
            print(f"{row.label}: SE {row.mean_se:.4f} ({row.delta_se_pct:+.2f}%), BLER {row.mean_bler:.4f}")

    elif args.command == "sweep-ke":
        config = _experiment_from_args(args, args.config_file)
        values = [float(v) for v in args.values.split(",") if v.strip()]
        for summary in sweep_ke(config, values):
            print(f"k_E={summary.k_e:g}: median SE {summary.median_se:.4f}, "
                  f"median BLER {summary.median_bler:.4f}, median MCS {summary.median_mcs:g}")

    elif args.command == "fqi":
        fqi_cfg = FqiConfig(iterations=args.iterations, gamma=args.gamma, seed=args.seed)
        out = Path(args.output_dir) if args.output_dir else Path(get_settings().OUTPUT_ROOT) / "fqi"
        response = run_fqi(args.dataset, fqi_cfg, out)
        print(f"samples={response.samples} dropped={response.dropped_rows} "
              f"final avg Q={response.avg_q_curve[-1]:.4f} TV={response.tv_distance:.4f}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    configure_logging(args.log_level)

    try:
        _dispatch(args)
    except (ConfigError, ValidationError) as exc:
        logger.error("Configuration error: %s", exc)
        return 2
    except (LinkAdaptationError, OSError) as exc:
        logger.error("Run failed: %s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
