"""Command-line interface: train, eval, fewshot, binding, inspect."""

import logging
import sys
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

import click
import typer
from rich.console import Console
from rich.table import Table

from livewire.checkpoint import CheckpointError, load_checkpoint
from livewire.config import (
    ConfigError,
    RunConfig,
    load_model,
    load_run_config,
    parse_node_ref,
)
from livewire.constants import (
    APP_NAME,
    CONFIG_SNAPSHOT_FILENAME,
    DATA_SPEC_FILENAME,
    EXIT_RUNTIME,
    EXIT_USAGE,
    FEWSHOT_SUMMARY_FILENAME,
)
from livewire.data.dataset import Dataset, DatasetError
from livewire.data.tabular import CsvFormatError, DataSpec, infer_schema, load_csv
from livewire.data.tasks import CoincidenceData, FewShotProtocol, TaskError, gen_coincidence
from livewire.infometrics import InfoMetricsError
from livewire.models import LivewireError, LossKind, NodeRef
from livewire.training.binding import pooled_p_value, run_binding
from livewire.training.fewshot import mean_drop, run_fewshot, summarize_fewshot
from livewire.training.inspection import InspectReport, inspect
from livewire.training.trainer import evaluate, train

logger = logging.getLogger(__name__)

app = typer.Typer(
    help="Train and inspect livewired sparse neural networks",
    no_args_is_help=True,
)

_USAGE_ERRORS = (
    ConfigError,
    CheckpointError,
    CsvFormatError,
    DatasetError,
    TaskError,
    InfoMetricsError,
    ValueError,
)


@contextmanager
def _exit_codes() -> Iterator[None]:
    """Map package errors to exit codes: 1 for bad input, 2 for runtime failures."""
    try:
        yield
    except _USAGE_ERRORS as exc:
        typer.echo(f"Error: {exc}", err=True)
        raise typer.Exit(EXIT_USAGE) from exc
    except LivewireError as exc:
        typer.echo(f"Error: {exc}", err=True)
        raise typer.Exit(EXIT_RUNTIME) from exc


@app.callback()
def _configure(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log debug messages"),
) -> None:
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger(APP_NAME).setLevel(logging.DEBUG if verbose else logging.INFO)


def _seeded(cfg: RunConfig, offset: int) -> RunConfig:
    if offset == 0:
        return cfg
    return cfg.model_copy(
        update={
            "init_seed": cfg.init_seed + offset,
            "dropout_seed": cfg.dropout_seed + offset,
            "growth_seed": cfg.growth_seed + offset,
            "data_seed": cfg.data_seed + offset,
        }
    )


def _load_training_data(path: Path) -> tuple[Dataset, DataSpec | None]:
    if path.suffix.lower() == ".csv":
        schema = infer_schema(path)
        data, stats = load_csv(path, schema)
        return data, DataSpec(csv_schema=schema, stats=stats)
    task = load_model(path, CoincidenceData)
    return gen_coincidence(task, task.n_samples), None


def _load_eval_data(path: Path, checkpoint: Path, data_spec: Path | None) -> Dataset:
    spec_path = data_spec or checkpoint.parent / DATA_SPEC_FILENAME
    if spec_path.exists():
        spec = load_model(spec_path, DataSpec)
        data, _ = load_csv(path, spec.csv_schema, spec.stats)
        return data
    logger.warning("no %s found: standardizing %s with its own statistics", spec_path, path)
    data, _ = load_csv(path, infer_schema(path))
    return data


@app.command("train")
def train_command(
    config: Path = typer.Option(..., "--config", "-c", help="Run config JSON file"),  # noqa: B008
    data: Path = typer.Option(  # noqa: B008
        ..., "--data", "-d", help="CSV file or coincidence task JSON file"
    ),
    out: Path | None = typer.Option(  # noqa: B008
        None, "--out", "-o", help="Output directory (default: output_dir from the config)"
    ),
    resume: Path | None = typer.Option(  # noqa: B008
        None, "--resume", help="Checkpoint to continue from"
    ),
) -> None:
    """Train a network and write checkpoints and metrics."""
    with _exit_codes():
        cfg = load_run_config(config)
        dataset, spec = _load_training_data(data)
        out_dir = out or Path(cfg.output_dir)
        if spec is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / DATA_SPEC_FILENAME).write_text(
                spec.model_dump_json(indent=2) + "\n", encoding="utf-8"
            )
        result = train(cfg, dataset, out_dir, resume_from=resume)
        last = result.records[-1] if result.records else None
        net = result.network
        typer.echo(f"Trained {net.step_count} step(s), {net.edge_count} edges")
        if last is not None:
            typer.echo(f"Final loss {last.loss:.6f}, {result.state.rewire_rounds} rewire round(s)")
        typer.echo(f"Checkpoint: {result.checkpoint}")


@app.command("eval")
def eval_command(
    checkpoint: Path = typer.Option(..., "--checkpoint", help="Checkpoint file"),  # noqa: B008
    data: Path = typer.Option(..., "--data", "-d", help="CSV file"),  # noqa: B008
    data_spec: Path | None = typer.Option(  # noqa: B008
        None, "--data-spec", help="Schema and statistics written by train (default: next to it)"
    ),
    batch_size: int = typer.Option(256, "--batch-size", min=1),
) -> None:
    """Evaluate a checkpoint on a CSV file with running statistics, no dropout."""
    with _exit_codes():
        net = load_checkpoint(checkpoint)
        config_path = checkpoint.parent / CONFIG_SNAPSHOT_FILENAME
        loss = LossKind.SOFTMAX_CROSS_ENTROPY
        if config_path.exists():
            loss = load_run_config(config_path).loss
        dataset = _load_eval_data(data, checkpoint, data_spec)
        result = evaluate(net, dataset, loss, batch_size)

    table = Table(title=f"Evaluation of {checkpoint}")
    table.add_column("samples", justify="right")
    table.add_column("loss", justify="right")
    table.add_column("accuracy", justify="right")
    accuracy = "-" if result.accuracy is None else f"{result.accuracy:.4f}"
    table.add_row(str(result.n_samples), f"{result.loss:.6f}", accuracy)
    Console().print(table)


@app.command("fewshot")
def fewshot_command(
    config: Path = typer.Option(..., "--config", "-c", help="Run config JSON file"),  # noqa: B008
    protocol: Path = typer.Option(  # noqa: B008
        ..., "--protocol", "-p", help="Few-shot protocol JSON"
    ),
    out: Path = typer.Option(..., "--out", "-o", help="Output directory"),  # noqa: B008
    repeats: int = typer.Option(1, "--repeats", "-n", min=1, help="Seeds to run"),
) -> None:
    """Compare livewired adaptation against a global-rate control arm."""
    with _exit_codes():
        cfg = load_run_config(config)
        base = load_model(protocol, FewShotProtocol)
        reports = []
        for k in range(repeats):
            proto = base.model_copy(update={"seed": base.seed + k})
            target = out if repeats == 1 else out / f"seed-{proto.seed:04d}"
            reports.append(run_fewshot(_seeded(cfg, k), proto, target))
        summary = summarize_fewshot(reports)
        out.mkdir(parents=True, exist_ok=True)
        (out / FEWSHOT_SUMMARY_FILENAME).write_text(
            summary.model_dump_json(indent=2) + "\n", encoding="utf-8"
        )

    table = Table(title="Few-shot adaptation")
    for column in ("seed", "base drop", "control drop", "novel acc", "control novel", "met"):
        table.add_column(column, justify="right")
    for r in reports:
        table.add_row(
            str(r.seed),
            f"{r.livewired.base_drop:.4f}",
            f"{r.control.base_drop:.4f}",
            f"{r.livewired.novel_acc:.4f}",
            f"{r.control.novel_acc:.4f}",
            "yes" if r.criterion_met else "no",
        )
    Console().print(table)
    lw_drop, ctrl_drop = mean_drop(reports)
    typer.echo(
        f"{summary.both_ok}/{summary.runs} seed(s) met both criteria; "
        f"mean drop {lw_drop:.4f} vs control {ctrl_drop:.4f}"
    )


@app.command("binding")
def binding_command(
    config: Path = typer.Option(..., "--config", "-c", help="Run config JSON file"),  # noqa: B008
    task: Path = typer.Option(..., "--task", "-t", help="Coincidence task JSON"),  # noqa: B008
    repeats: int = typer.Option(1, "--repeats", "-n", min=1, help="Seeds to run"),
) -> None:
    """Measure whether livewiring binds correlated input groups."""
    with _exit_codes():
        cfg = load_run_config(config)
        spec = load_model(task, CoincidenceData)
        reports = [
            run_binding(
                _seeded(cfg, k), spec.model_copy(update={"seed": spec.seed + k}), spec.n_samples
            )
            for k in range(repeats)
        ]

    table = Table(title="Coincidence binding")
    columns = ("seed", "MI init", "MI init pair", "MI trained", "grown", "same pair", "chance", "p")
    for column in columns:
        table.add_column(column, justify="right")
    for r in reports:
        table.add_row(
            str(r.seed),
            f"{r.mi_init_bits:.4f}",
            f"{r.mi_initial_pair_trained_bits:.4f}",
            f"{r.mi_trained_bits:.4f}",
            str(r.edges_grown),
            str(r.same_pair_grown),
            f"{r.same_pair_expected_rate:.3f}",
            f"{r.p_value:.3g}",
        )
    Console().print(table)
    increased = sum(r.mi_increased for r in reports)
    fixed = sum(r.mi_increased_for_initial_pair for r in reports)
    typer.echo(f"MI increased in {increased}/{len(reports)} seed(s)")
    typer.echo(f"MI of the initial pair increased in {fixed}/{len(reports)} seed(s)")
    typer.echo(f"pooled p-value {pooled_p_value(reports):.3g}")


def _parse_nodes(text: str) -> list[NodeRef]:
    return [parse_node_ref(part) for part in text.split(",") if part.strip()]


def _render(report: InspectReport, console: Console) -> None:
    summary = Table(title="Topology")
    summary.add_column("widths")
    summary.add_column("step", justify="right")
    summary.add_column("edges", justify="right")
    summary.add_column("density", justify="right")
    summary.add_row(
        str(report.layer_widths),
        str(report.step_count),
        str(report.edge_count),
        f"{report.density:.4f}",
    )
    console.print(summary)

    by_distance = Table(title="Density by layer distance")
    by_distance.add_column("distance", justify="right")
    by_distance.add_column("density", justify="right")
    for d, value in report.density_by_distance.items():
        by_distance.add_row(str(d), f"{value:.4f}")
    console.print(by_distance)

    ages = Table(title="Edge ages")
    ages.add_column("ages")
    ages.add_column("edges", justify="right")
    for b in report.age_histogram:
        ages.add_row(f"{b.low}" if b.low == b.high else f"{b.low}-{b.high}", str(b.count))
    console.print(ages)

    for node in report.nodes:
        edges = Table(title=f"Edges of {node.node}")
        edges.add_column("direction")
        edges.add_column("edge")
        edges.add_column("weight", justify="right")
        edges.add_column("age", justify="right")
        for view in node.incoming:
            edges.add_row("in", f"{view.src}->{view.dst}", f"{view.weight:.6f}", str(view.age))
        for view in node.outgoing:
            edges.add_row("out", f"{view.src}->{view.dst}", f"{view.weight:.6f}", str(view.age))
        console.print(edges)

    if report.mi:
        mi = Table(title="Mutual information")
        for column in ("a", "b", "bits", "coincidence", "n"):
            mi.add_column(column)
        for s in report.mi:
            mi.add_row(s.a, s.b, f"{s.mi_bits:.4f}", f"{s.coincidence_ratio:.3f}", str(s.n_obs))
        console.print(mi)


@app.command("inspect")
def inspect_command(
    checkpoint: Path = typer.Option(..., "--checkpoint", help="Checkpoint file"),  # noqa: B008
    nodes: str = typer.Option("", "--nodes", help="Comma-separated L:I node references"),
    events: Path | None = typer.Option(None, "--events", help="Event log JSON"),  # noqa: B008
    as_json: bool = typer.Option(False, "--json", help="Print the raw report as JSON"),
) -> None:
    """Report topology statistics and the edges around selected nodes."""
    with _exit_codes():
        report = inspect(checkpoint, _parse_nodes(nodes), events)
    if as_json:
        typer.echo(report.model_dump_json(indent=2))
    else:
        _render(report, Console())


def main() -> None:
    """Console entry point; usage errors exit with 1 rather than click's 2."""
    try:
        code = app(standalone_mode=False)
    except click.exceptions.ClickException as exc:
        exc.show()
        sys.exit(EXIT_USAGE)
    except click.exceptions.Abort:
        sys.exit(EXIT_USAGE)
    sys.exit(code if isinstance(code, int) else 0)
