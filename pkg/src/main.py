#!/usr/bin/env python3
import sys
from pathlib import Path
from typing import Annotated, Dict, List, Optional, Tuple

import typer

# Add repo root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.config import CONFIGS_DIR, RUNS_DIR
from src.exceptions import EsplError
from src.monitoring.evaluator import expected_final_reward, run_ablation
from src.monitoring.logger import setup_logger
from src.monitoring.metrics import ITERATION, MetricsWriter, read_metrics
from src.monitoring.tracing import create_langfuse_handler
from src.population.population import ratings_table
from src.population.tree_export import export_tree as render_tree
from src.training.checkpoint import TrainingState, load_checkpoint
from src.training.config import EsplConfig, load_config
from src.training.orchestrator import EsplTrainer, resume as resume_run
from src.training.replay import replay_ratings as replay_metrics

# Setup logger
logger = setup_logger(__name__)

app = typer.Typer(help="Evolutionary system prompt learning: rated prompt population + policy-gradient learner")


def initialize_system(cfg: EsplConfig, run_dir: Optional[Path] = None) -> EsplTrainer:
    """
        Build a trainer for cfg - REUSABLE by both CLI and Streamlit
    """
    logger.info("Initializing E-SPL trainer")

    langfuse_handler = None
    if cfg.reflector.backend == "http" or cfg.sampler.backend == "http":
        logger.info("[1/2] Connecting to Langfuse...")
        langfuse_handler = create_langfuse_handler()

    logger.info("[2/2] Building environment, reflector and population...")
    metrics_path = run_dir / "metrics.jsonl" if run_dir is not None else None
    checkpoint_dir = run_dir / "checkpoints" if run_dir is not None else None
    trainer = EsplTrainer(cfg, MetricsWriter(metrics_path), checkpoint_dir, langfuse_handler=langfuse_handler)

    logger.info("=" * 50)
    logger.info("System Ready!")
    logger.info("=" * 50)
    return trainer


def load_run(checkpoint: Path) -> Tuple[EsplConfig, TrainingState, List[Dict]]:
    """
        Load a checkpoint plus its metrics stream (empty when the file is gone)
    """
    cfg, state, metrics_path = load_checkpoint(checkpoint)
    records: List[Dict] = []
    if metrics_path and Path(metrics_path).exists():
        records = [r for r in read_metrics(metrics_path) if r["type"] == ITERATION and r["iteration"] < state.iteration]
    else:
        logger.warning(f"No metrics stream found for {checkpoint}")
    return cfg, state, records


@app.command()
def train(
    config: Annotated[Path, typer.Option("--config", "-c", help="YAML run configuration")] = CONFIGS_DIR / "synthetic.yaml",
    env: Annotated[Optional[str], typer.Option("--env", help="Rollout backend: synthetic or http")] = None,
    iters: Annotated[Optional[int], typer.Option("--iters", help="Number of iterations")] = None,
    seed: Annotated[Optional[int], typer.Option("--seed", help="Global seed")] = None,
    checkpoint_dir: Annotated[Optional[Path], typer.Option("--checkpoint-dir", help="Run directory for metrics and checkpoints")] = None,
):
    """Train from the root prompt."""
    try:
        overrides = {"iterations": iters, "seed": seed}
        cfg = load_config(config, **overrides)
        if env is not None:
            cfg = load_config(config, **overrides, sampler={**cfg.sampler.model_dump(), "backend": env})
        run_dir = checkpoint_dir or RUNS_DIR / f"seed{cfg.seed}"
        trainer = initialize_system(cfg, run_dir)
        state = trainer.run()
    except EsplError as e:
        logger.error(f"Training failed: {e}", exc_info=True)
        raise typer.Exit(1)

    best = max(state.population.nodes, key=lambda n: (n.rating.mu, -n.id))
    typer.echo(f"Finished {state.iteration} iterations, {len(state.population)} prompts")
    typer.echo(f"Best prompt #{best.id} (mu={best.rating.mu:.3f}, sigma={best.rating.sigma:.3f}):\n{best.text}")
    if trainer.env is not None:
        typer.echo(f"Expected reward of the best window prompt: {expected_final_reward(state, trainer):.4f}")


@app.command()
def resume(
    checkpoint: Annotated[Path, typer.Option("--checkpoint", help="Checkpoint JSON to continue from")],
    iters: Annotated[Optional[int], typer.Option("--iters", help="Total iteration count to reach")] = None,
):
    """Continue a run from a checkpoint."""
    try:
        state = resume_run(checkpoint, iterations=iters)
    except EsplError as e:
        logger.error(f"Resume failed: {e}", exc_info=True)
        raise typer.Exit(1)
    typer.echo(f"Resumed run finished at iteration {state.iteration}, {len(state.population)} prompts")


@app.command("export-tree")
def export_tree(
    checkpoint: Annotated[Path, typer.Option("--checkpoint", help="Checkpoint JSON")],
    format: Annotated[str, typer.Option("--format", help="dot or json")] = "dot",
    output: Annotated[Optional[Path], typer.Option("--output", "-o", help="Write to a file instead of stdout")] = None,
):
    """Export the evolutionary tree of a checkpoint."""
    try:
        _, state, _ = load_checkpoint(checkpoint)
        data = render_tree(state.population, format)
    except EsplError as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(1)
    if output is not None:
        output.write_bytes(data)
        typer.echo(f"Tree written to {output}")
    else:
        typer.echo(data.decode("utf-8"), nl=False)


@app.command("replay-ratings")
def replay_ratings(
    metrics: Annotated[Path, typer.Option("--metrics", help="metrics.jsonl of a run")],
):
    """Recompute all ratings from a metrics log and compare with the logged values."""
    report = replay_metrics(metrics)
    typer.echo(f"Replayed {report.tournaments} tournaments and {report.children} children")
    for node_id, (mu, sigma) in report.ratings.items():
        typer.echo(f"  #{node_id}: mu={mu:.6f} sigma={sigma:.6f}")
    if not report.ok:
        for line in report.mismatches:
            typer.echo(f"MISMATCH {line}", err=True)
        raise typer.Exit(1)
    typer.echo("All ratings reproduced exactly")


@app.command()
def ablate(
    config: Annotated[Path, typer.Option("--config", "-c", help="YAML run configuration")] = CONFIGS_DIR / "synthetic.yaml",
    seeds: Annotated[int, typer.Option("--seeds", help="Number of seeds per mode")] = 5,
    iters: Annotated[Optional[int], typer.Option("--iters", help="Iterations per run")] = None,
):
    """Compare full training with RL-only and evolution-only runs."""
    cfg = load_config(config, iterations=iters)
    summary = run_ablation(cfg, list(range(seeds)))
    for mode in summary.rewards:
        typer.echo(f"{mode:>15}: {summary.mean(mode):.4f}  {[round(r, 4) for r in summary.rewards[mode]]}")


@app.command()
def ratings(
    checkpoint: Annotated[Path, typer.Option("--checkpoint", help="Checkpoint JSON")],
):
    """List every prompt's rating, best UCB first."""
    cfg, state, _ = load_checkpoint(checkpoint)
    for node_id, mu, sigma, ucb in ratings_table(state.population, cfg.lam):
        typer.echo(f"#{node_id:<4} mu={mu:8.3f} sigma={sigma:7.3f} ucb={ucb:8.3f}")


if __name__ == "__main__":
    app()
