from pathlib import Path

import pandas as pd
from rich import box
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from data.models import RunConfig, SpeedupRow, TrainingLogRow

console = Console()


def _fmt(value: float, digits: int = 4) -> str:
    return "n/a" if value is None or pd.isna(value) else f"{value:.{digits}f}"


def print_initial_states(paths: list[Path], t_values: list[float] | None = None) -> None:
    if not paths:
        console.print("[bold red]No initial states generated[/bold red]")
        return

    console.print(Panel.fit("[bold cyan] INITIAL STATES[/bold cyan]", style="cyan"))
    console.print(f"[bold white]Directory:[/bold white] {paths[0].parent}")
    console.print(f"[bold white]Files:[/bold white] {len(paths)}")
    if t_values:
        console.print(
            f"[bold white]t_init range:[/bold white] {min(t_values):.2f} - {max(t_values):.2f}"
        )


def print_run_summary(config: RunConfig, rows: list[TrainingLogRow]) -> None:
    if not rows:
        console.print("[bold red]No updates were run[/bold red]")
        return

    console.print(Panel.fit("[bold cyan] TRAINING SUMMARY[/bold cyan]", style="cyan"))
    console.print(f"[bold white]Run:[/bold white] {config.run.run_id}")
    console.print(
        f"[bold white]Environment:[/bold white] {config.run.environment.value}   "
        f"[bold white]Mode:[/bold white] {config.collector.mode.value}   "
        f"[bold white]n_env:[/bold white] {config.collector.n_env}"
    )

    last = rows[-1]
    table = Table(show_header=True, header_style="bold magenta", box=box.SIMPLE_HEAVY)
    table.add_column("Metric", style="yellow")
    table.add_column("Value", justify="right", style="bright_white")
    table.add_row("Updates", str(len(rows)))
    table.add_row("Transitions", str(last.transitions))
    table.add_row("Walltime (s)", _fmt(last.walltime_s, 1))
    table.add_row("Final score", _fmt(last.score_mean))
    table.add_row("Final value loss", _fmt(last.value_loss))
    table.add_row(
        "Off-policy updates",
        str(sum(1 for row in rows if row.offpolicy_fraction > 0)),
    )

    env = sum(row.env_time_s for row in rows)
    train = sum(row.train_time_s for row in rows)
    other = sum(row.other_time_s for row in rows)
    total = env + train + other
    if total > 0:
        table.add_row(
            "Time split env/train/other",
            f"{env / total:.0%} / {train / total:.0%} / {other / total:.0%}",
        )
    console.print(table)


def print_speedup_table(rows: list[SpeedupRow]) -> None:
    if not rows:
        console.print("[bold red]No speedup measurements[/bold red]")
        return

    console.print(Panel.fit("[bold cyan] PARALLEL SPEEDUP[/bold cyan]", style="cyan"))
    table = Table(show_header=True, header_style="bold green", box=box.SQUARE)
    table.add_column("Mode", style="cyan")
    table.add_column("n_env", justify="right")
    table.add_column("Walltime (s)", justify="right")
    table.add_column("Speedup", justify="right", style="bright_white")
    table.add_column("Perfect", justify="right")
    table.add_column("Reference", justify="right", style="dim")
    for row in rows:
        table.add_row(
            row.mode.value,
            str(row.n_env),
            _fmt(row.walltime_s, 2),
            _fmt(row.speedup, 2),
            _fmt(row.perfect_speedup, 1),
            _fmt(row.reference_speedup, 1) if row.reference_speedup is not None else "-",
        )
    console.print(table)


def print_aggregate_summary(frame: pd.DataFrame) -> None:
    if frame is None or frame.empty:
        console.print("[bold red]Nothing to aggregate[/bold red]")
        return

    console.print(Panel.fit("[bold cyan] AGGREGATED RUNS[/bold cyan]", style="cyan"))
    console.print(f"[bold white]Runs:[/bold white] {int(frame['runs'].iloc[0])}")
    console.print(f"[bold white]Updates:[/bold white] {len(frame)}")
    last = frame.iloc[-1]
    console.print(
        f"[bold white]Final score:[/bold white] {_fmt(last['score_mean_mean'])} "
        f"[dim]({_fmt(last['score_mean_min'])} .. {_fmt(last['score_mean_max'])})[/dim]"
    )


def print_eval_summary(rewards: list[float], snapshot_files: list[Path], controlled: bool) -> None:
    if not rewards:
        console.print("[bold red]Evaluation produced no steps[/bold red]")
        return

    title = "EVALUATION" if controlled else "UNCONTROLLED BASELINE"
    console.print(Panel.fit(f"[bold cyan] {title}[/bold cyan]", style="cyan"))
    console.print(f"[bold white]Steps:[/bold white] {len(rewards)}")
    console.print(f"[bold white]Score:[/bold white] {_fmt(sum(rewards) / len(rewards))}")
    for path in snapshot_files:
        console.print(f"  [green]{path}[/green]")
