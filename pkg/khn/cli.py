"""Typer-based CLI for kernel-conditioned hypernetworks."""

import logging
from contextlib import contextmanager
from enum import Enum
from pathlib import Path
from typing import Iterator, Optional

import typer
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.panel import Panel
from rich.table import Table

from khn.autodiff.gradcheck import check_gradients
from khn.config import runtime_config
from khn.episodes.sampler import open_source, sample_episode
from khn.episodes.synthetic import SyntheticTaskSource, write_description
from khn.errors import ConfigError, KHNError
from khn.models.presets import PRESETS, get_preset
from khn.models.schemas import EvaluationMetrics, IterationMetrics, RunConfig, SyntheticDataConfig
from khn.networks.model import HypernetModel
from khn.storage.checkpoint import load_checkpoint, save_checkpoint
from khn.storage.ledger import RunLedger, new_run_id
from khn.storage.metrics import MetricsWriter, write_eval_report
from khn.training.evaluate import evaluate_variants
from khn.training.loss import episode_loss
from khn.training.trainer import train as train_model

app = typer.Typer(help="Few-shot classification with kernel-conditioned hypernetworks")
console = Console()
logger = logging.getLogger("khn")

CHECKPOINT_FILE = "checkpoint.khn"
METRICS_FILE = "metrics.csv"
CONFIG_FILE = "config.json"
DATASET_FILE = "dataset.json"


class FinetuneMode(str, Enum):
    on = "on"
    off = "off"
    both = "both"


def _configure_logging(level: str):
    logging.basicConfig(
        level=level.upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


def _validation_message(error: ValidationError) -> str:
    problems = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        problems.append(f"{location}: {item['msg']}")
    return "invalid configuration: " + "; ".join(problems)


@contextmanager
def _cli_errors() -> Iterator[None]:
    """Report library errors in red and exit with their code."""
    try:
        yield
    except ValidationError as e:
        console.print(f"[bold red]Error: {escape(_validation_message(e))}[/bold red]")
        raise typer.Exit(code=2)
    except KHNError as e:
        console.print(f"[bold red]Error: {escape(str(e))}[/bold red]")
        raise typer.Exit(code=e.exit_code)
    except OSError as e:
        console.print(f"[bold red]Error: {escape(str(e))}[/bold red]")
        raise typer.Exit(code=1)


def read_config_text(path: Path) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror or e}") from e


def load_run_config(path: Optional[Path], preset: str) -> RunConfig:
    """Run config from a JSON file, or the named preset when no file is given."""
    if path is None:
        return get_preset(preset)
    return RunConfig.model_validate_json(read_config_text(path))


@app.callback()
def main(
    log_level: Optional[str] = typer.Option(
        None, "--log-level", help="Logging level (default: KHN_LOG_LEVEL or INFO)"
    ),
):
    """Configure logging for every command."""
    _configure_logging(log_level or runtime_config.log_level)


@app.command()
def train(
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="Run config JSON"),
    preset: str = typer.Option(
        "desk", "--preset", help=f"Preset when no config is given: {', '.join(PRESETS)}"
    ),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory (overrides output_dir)"),
    seed: Optional[int] = typer.Option(None, "--seed", min=0, help="Seed (overrides the config)"),
):
    """Train a model episodically and write checkpoint, metrics and resolved config."""
    with _cli_errors():
        run_config = load_run_config(config, preset)
        updates: dict = {}
        if out is not None:
            updates["output_dir"] = str(out)
        if seed is not None:
            updates["seed"] = seed
        run_config = RunConfig.model_validate({**run_config.model_dump(), **updates})

        out_dir = Path(run_config.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / CONFIG_FILE).write_text(run_config.model_dump_json(indent=2))

        train_source = open_source(run_config.data, "train")
        validation_source = open_source(run_config.data, "val") if run_config.training.eval_every else None

        ledger = RunLedger(runtime_config.ledger_url(str(out_dir)))
        run_id = new_run_id("train")
        ledger.start_run(run_id, "train", run_config, str(out_dir))

        metrics = MetricsWriter(out_dir / METRICS_FILE, reset=True)
        rows: list[IterationMetrics] = []

        def on_iteration(row: IterationMetrics):
            metrics.write(row)
            rows.append(row)

        def on_evaluation(iteration: int, report):
            write_eval_report(out_dir / f"eval_iter{iteration}.json", report)
            ledger.log_evaluation(run_id, EvaluationMetrics.from_report(report, iteration))

        console.print(
            f"[bold yellow]Training run {run_id} "
            f"({run_config.training.iterations} iterations)...[/bold yellow]"
        )
        try:
            result = train_model(
                train_source,
                run_config,
                validation_source=validation_source,
                on_iteration=on_iteration,
                on_evaluation=on_evaluation,
            )
            checkpoint = save_checkpoint(out_dir / CHECKPOINT_FILE, result.model, run_config)
        except BaseException:
            ledger.log_iterations(run_id, rows)
            ledger.finish_run(run_id, status="failed")
            raise

        ledger.log_iterations(run_id, rows)
        ledger.finish_run(run_id, checkpoint_path=str(checkpoint), final_loss=result.loss_history[-1])

        console.print(
            Panel.fit(
                f"[bold]Run:[/bold] {run_id}\n"
                f"[bold]Iterations:[/bold] {result.iterations}\n"
                f"[bold]Final loss:[/bold] {result.loss_history[-1]:.4f}\n"
                f"[bold]Checkpoint:[/bold] {checkpoint}\n"
                f"[bold]Metrics:[/bold] {out_dir / METRICS_FILE}",
                title="TRAINING COMPLETE",
                style="bold green",
            )
        )


@app.command(name="eval")
def eval_command(
    checkpoint: Path = typer.Option(..., "--checkpoint", help="Checkpoint written by `khn train`"),
    episodes: int = typer.Option(200, "--episodes", "-n", min=1, help="Number of evaluation episodes"),
    finetune: FinetuneMode = typer.Option(
        FinetuneMode.off, "--finetune", help="Support-set finetuning: on, off or both"
    ),
    config: Optional[Path] = typer.Option(
        None, "--config", "-c", help="Run config naming a different evaluation source"
    ),
    out: Optional[Path] = typer.Option(
        None, "--out", "-o", help="Report directory (default: next to the checkpoint)"
    ),
    seed: Optional[int] = typer.Option(
        None, "--seed", min=0, help="Episode seed (default: the run's seed)"
    ),
):
    """Evaluate a checkpoint on held-out episodes and report mean ± 95% interval."""
    with _cli_errors():
        model, run_config = load_checkpoint(checkpoint)
        source_config = run_config
        if config is not None:
            source_config = load_run_config(config, "desk")
        data = source_config.eval_data or source_config.data
        source = open_source(data, "test")

        variants = {"on": ["finetuned"], "off": ["plain"], "both": ["plain", "finetuned"]}[finetune.value]
        reports = evaluate_variants(
            model,
            source,
            episodes,
            run_config.finetune,
            variants,
            seed=run_config.seed if seed is None else seed,
            queries_per_class=run_config.episodes.queries_per_class,
        )

        out_dir = Path(out) if out is not None else Path(checkpoint).parent
        out_dir.mkdir(parents=True, exist_ok=True)
        ledger = RunLedger(runtime_config.ledger_url(str(out_dir)))
        run_id = new_run_id("eval")
        ledger.start_run(run_id, "eval", run_config, str(out_dir))

        table = Table(title="EVALUATION")
        table.add_column("Variant")
        table.add_column("Episodes", justify="right")
        table.add_column("Accuracy (%)", justify="right")
        try:
            for variant, report in reports.items():
                path = write_eval_report(out_dir / f"eval_{variant}.json", report)
                ledger.log_evaluation(run_id, EvaluationMetrics.from_report(report))
                table.add_row(variant, str(report.episode_count), report.summary())
                logger.info("wrote %s report to %s", variant, path)
        except BaseException:
            ledger.finish_run(run_id, status="failed")
            raise
        ledger.finish_run(run_id, checkpoint_path=str(checkpoint))
        console.print(table)


@app.command()
def gradcheck(
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="Run config JSON"),
    preset: str = typer.Option("gradcheck", "--preset", help="Preset when no config is given"),
    max_params: int = typer.Option(5000, "--max-params", help="Refuse models larger than this"),
    tolerance: float = typer.Option(1e-4, "--tolerance", help="Maximum relative error per group"),
    step: float = typer.Option(1e-5, "--step", help="Finite-difference step h"),
    seed: Optional[int] = typer.Option(None, "--seed", min=0, help="Seed (overrides the config)"),
):
    """Compare backpropagated gradients with central finite differences."""
    with _cli_errors():
        run_config = load_run_config(config, preset)
        if seed is not None:
            run_config = RunConfig.model_validate({**run_config.model_dump(), "seed": seed})
        model = HypernetModel.from_config(run_config)
        count = model.parameter_count()
        if count > max_params:
            console.print(
                f"[bold red]Error: model has {count} parameters, "
                f"above the gradcheck threshold of {max_params}[/bold red]"
            )
            raise typer.Exit(code=2)

        shape = run_config.episodes
        episode = sample_episode(
            open_source(run_config.data, "train"),
            shape.way,
            shape.shot,
            shape.queries_per_class,
            run_config.seed,
            split="train",
        )
        results = check_gradients(lambda: episode_loss(model, episode), model.groups(), h=step)

        table = Table(title=f"GRADIENT CHECK ({count} parameters)")
        table.add_column("Group")
        table.add_column("Parameters", justify="right")
        table.add_column("Max rel. error", justify="right")
        table.add_column("Status")
        for result in results:
            if result.skipped:
                status = "[dim]skipped (empty)[/dim]"
            elif result.passed(tolerance):
                status = "[green]pass[/green]"
            else:
                status = "[red]FAIL[/red]"
            error = "-" if result.skipped else f"{result.max_relative_error:.3e}"
            table.add_row(result.group, str(result.parameter_count), error, status)
        console.print(table)

        failed = [r.group for r in results if not r.passed(tolerance)]
        if failed:
            console.print(f"[bold red]Gradient check failed for: {', '.join(failed)}[/bold red]")
            raise typer.Exit(code=4)
        console.print("[bold green]Gradient check passed[/bold green]")


@app.command(name="gen-data")
def gen_data(
    out: Path = typer.Option(..., "--out", "-o", help="Directory for the dataset description"),
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="Synthetic data config JSON"),
    input_dim: int = typer.Option(16, "--input-dim"),
    class_pool_size: int = typer.Option(100, "--class-pool-size"),
    cluster_spread: float = typer.Option(1.0, "--cluster-spread"),
    center_scale: float = typer.Option(10.0, "--center-scale"),
    seed: int = typer.Option(0, "--seed", min=0),
):
    """Materialize a synthetic dataset description so runs are reproducible from disk."""
    with _cli_errors():
        if config is not None:
            data_config = SyntheticDataConfig.model_validate_json(read_config_text(config))
        else:
            data_config = SyntheticDataConfig(
                input_dim=input_dim,
                class_pool_size=class_pool_size,
                cluster_spread=cluster_spread,
                center_scale=center_scale,
                seed=seed,
            )
        source = SyntheticTaskSource.from_config(data_config)
        path = write_description(source, Path(out) / DATASET_FILE)
        console.print(f"[bold green]Wrote dataset description: {path}[/bold green]")
        console.print(f'[dim]Reference it with: "data": {{"kind": "described", "path": "{path}"}}[/dim]')


@app.command(name="config")
def config_command(
    preset: str = typer.Option("desk", "--preset", help=f"One of: {', '.join(PRESETS)}"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Write the config here instead of printing"),
):
    """Print or write a preset as a resolved run config."""
    with _cli_errors():
        run_config = get_preset(preset)
        text = run_config.model_dump_json(indent=2)
        if out is None:
            console.print_json(text)
            return
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
        console.print(f"[bold green]Wrote {preset} config to {out}[/bold green]")


@app.command()
def runs(
    out: Path = typer.Option(Path("runs"), "--out", "-o", help="Directory holding the ledger"),
    db: Optional[str] = typer.Option(None, "--db", help="Ledger database URL (overrides --out)"),
):
    """List runs recorded in the ledger."""
    with _cli_errors():
        url = db or runtime_config.ledger_url(str(out))
        if url.startswith("sqlite:///") and not Path(url[len("sqlite:///") :]).exists():
            console.print("[dim]No runs recorded[/dim]")
            return
        records = RunLedger(url).list_runs()
        if not records:
            console.print("[dim]No runs recorded[/dim]")
            return

        table = Table(title="RUNS")
        for column in ("Run", "Command", "Status", "Seed", "Final loss", "Checkpoint"):
            table.add_column(column)
        for record in records:
            loss = "-" if record.final_loss is None else f"{record.final_loss:.4f}"
            table.add_row(
                record.run_id,
                record.command,
                record.status,
                str(record.seed),
                loss,
                record.checkpoint_path or "-",
            )
        console.print(table)


if __name__ == "__main__":
    app()
