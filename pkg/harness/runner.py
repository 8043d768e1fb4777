import logging
import time
from datetime import datetime, timezone
from pathlib import Path

from es_service.pool import EvalPool
from es_service.runners import (
    RunAborted,
    RunResult,
    cma_es_run,
    first_order_run,
    guided_es_run,
    sim_guided_real_run,
    vanilla_es_run,
)
from .config import ExperimentConfig
from .experiments import Problem, build_problem
from .recorder import CSV_COLUMNS, SCHEMA_VERSION, RunRecorder, write_manifest

logger = logging.getLogger(__name__)

__version__ = "0.3.0"


def _run_algorithm(config: ExperimentConfig, problem: Problem, seed: int, sink) -> RunResult:
    algorithm = config.algorithm
    budget = config.budget
    pool = EvalPool.get_instance()
    charge = config.get("run.charge_monitoring")

    if algorithm == "cma-es":
        return cma_es_run(problem.objective, problem.theta0, config.get("cma.sigma0"), budget, seed,
                          popsize=config.get("cma.popsize"), pool=pool, sink=sink, charge_monitoring=charge)

    optimizer = config.optimizer(problem.n, problem.layer_groups, prefix="opt")
    if algorithm == "first-order":
        return first_order_run(problem.objective, problem.drs_grad, problem.theta0, optimizer, budget, seed,
                               sink=sink)

    cfg = config.ges_config(problem.n)
    if algorithm == "vanilla-es":
        return vanilla_es_run(problem.objective, problem.theta0, cfg, optimizer, budget, seed, pool=pool, sink=sink,
                              charge_monitoring=charge)

    t_sim = config.get("ges.t_sim")
    if t_sim >= 1:
        def make_sim_optimizer():
            return config.optimizer(problem.n, problem.layer_groups, prefix="opt_sim")
        return sim_guided_real_run(problem.objective, problem.drs_grad, problem.theta0, cfg, optimizer,
                                   make_sim_optimizer, t_sim, budget, seed, pool=pool, sink=sink,
                                   charge_monitoring=charge)
    return guided_es_run(problem.objective, problem.drs_grad, problem.theta0, cfg, optimizer, budget, seed,
                         pool=pool, sink=sink, charge_monitoring=charge)


def run_experiment(config: ExperimentConfig) -> Path:
    """
    Runs every seed of the config into config.output_dir.

    Writes seed_<seed>.csv per seed and manifest.json. Raises RunAborted after
    writing the manifest if any seed fails; the partial CSV stays in place.
    """
    run_dir = config.output_dir
    label = f"{config.experiment}/{config.algorithm}"
    # Config errors surface here, before anything is written.
    problems = {seed: build_problem(config, seed) for seed in config.seeds}
    run_dir.mkdir(parents=True, exist_ok=True)
    logger.info(f"[{label}] Starting run into {run_dir} with seeds {config.seeds}")

    manifest = {
        "software_version": __version__,
        "csv_schema_version": SCHEMA_VERSION,
        "csv_columns": CSV_COLUMNS,
        "config_source": config.source,
        "config": config.values,
        "started_at": datetime.now(timezone.utc).isoformat(),
        "seeds": {},
    }
    failure = None
    for seed in config.seeds:
        started = time.perf_counter()
        problem = problems[seed]
        recorder = RunRecorder(run_dir, seed, record_wall_time=config.get("run.record_wall_time"))
        entry = {"csv": recorder.path.name, "threshold": problem.threshold, "zero_cost": problem.zero_cost,
                 "n": problem.n, "info": problem.info}
        try:
            result = _run_algorithm(config, problem, seed, recorder)
            entry["status"] = "completed"
            if result.records:
                entry["final_best_cost"] = result.records[-1].best_cost_so_far
            logger.info(f"[{label} seed={seed}] completed {recorder.rows} iterations")
        except RunAborted as e:
            entry.update(status="failed", error=str(e))
            failure = failure or e
        finally:
            entry["iterations"] = recorder.rows
            entry["elapsed_s"] = round(time.perf_counter() - started, 3)
            manifest["seeds"][str(seed)] = entry
        if failure is not None:
            break

    manifest["finished_at"] = datetime.now(timezone.utc).isoformat()
    manifest["status"] = "failed" if failure is not None else "completed"
    write_manifest(run_dir, manifest)
    if failure is not None:
        raise failure
    logger.info(f"[{label}] Run finished: {run_dir}")
    return run_dir
