"""Command-line entry point: one subcommand per pipeline stage plus validate/export/kappa."""

from __future__ import annotations

import json
import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional

import typer

from .analytics import write_reports
from .config import MODES, PipelineConfig, apply_overrides, load_config, parse_years
from .config import validate_config
from .dataset import REVIEW_KAPPA, REVIEW_METHODOLOGY, VALIDATION_REPORT, load_dataset
from .errors import ConfcurateError, ConfigurationError
from .methodology import kappa_from_review
from .pipeline import EXPORT_FORMATS, check_prerequisites, export_dataset, run
from .validation import validate_dataset

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

app = typer.Typer(add_completion=False, help="Curate a multi-year conference program dataset.")


@contextmanager
def _exit_on_error() -> Iterator[None]:
    try:
        yield
    except ConfcurateError as exc:
        logger.error("%s", exc)
        typer.echo(f"Error: {exc}", err=True)
        raise typer.Exit(code=exc.exit_code) from exc


def _config(ctx: typer.Context, stage: str, **overrides) -> PipelineConfig:
    options = ctx.obj or {}
    config = load_config(options.get("config"))
    config = apply_overrides(
        config, seed=options.get("seed"), mode=options.get("mode"), **overrides
    )
    return validate_config(config, stage)


def _report(results) -> None:
    for result in results:
        status = "up to date" if result.noop else "done"
        typer.echo(f"{result.manifest.stage}: {status} {json.dumps(result.manifest.counts)}")


@app.callback()
def main_callback(
    ctx: typer.Context,
    config: Optional[Path] = typer.Option(None, "--config", help="TOML config file"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Override every sampling seed"),
    mode: Optional[str] = typer.Option(None, "--mode", help="rules or model"),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
) -> None:
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=LOG_FORMAT)
    if mode is not None and mode not in MODES:
        raise typer.BadParameter(f"--mode must be one of {', '.join(MODES)}")
    ctx.obj = {"config": config, "seed": seed, "mode": mode}


@app.command("ingest")
def ingest_cmd(
    ctx: typer.Context,
    corpus: Optional[Path] = typer.Option(None, "--corpus", help="Snapshot corpus directory"),
    years: Optional[str] = typer.Option(None, "--years", help='e.g. "2005..2026" or "2007,2025"'),
    fetch: bool = typer.Option(False, "--fetch", help="Fetch missing pages from the archive"),
    base_url: Optional[str] = typer.Option(None, "--base-url"),
    delay_ms: Optional[int] = typer.Option(None, "--delay-ms", help="Politeness delay"),
    force: bool = typer.Option(False, "--force"),
) -> None:
    """Parse corpus snapshots into kept, excluded and flagged presentations."""
    with _exit_on_error():
        try:
            parsed_years = parse_years(years) if years else None
        except ValueError as exc:
            raise ConfigurationError(f"Invalid --years {years!r}: {exc}") from exc
        config = _config(
            ctx,
            "ingest",
            corpus_dir=corpus,
            years=parsed_years,
            fetch=fetch or None,
            base_url=base_url,
            delay_ms=delay_ms,
        )
        _report(run("ingest", config, force))


def _stage_command(stage: str, help_text: str) -> None:
    def command(ctx: typer.Context, force: bool = typer.Option(False, "--force")) -> None:
        with _exit_on_error():
            _report(run(stage, _config(ctx, stage), force))

    command.__doc__ = help_text
    app.command(stage)(command)


_stage_command("extract", "Split raw author blocks into structured affiliation fields.")
_stage_command("normalize", "Normalize names, positions, institutions and countries.")
_stage_command("resolve", "Cluster author records into identities.")
_stage_command("classify", "Label every presentation's research methodology.")


@app.command("analyze")
def analyze_cmd(
    ctx: typer.Context,
    dataset: Optional[Path] = typer.Option(None, "--dataset", help="Dataset directory"),
    out: Optional[Path] = typer.Option(
        None, "--out", help="Write reports here instead of recording a stage run"
    ),
    figures: Optional[Path] = typer.Option(None, "--figures", help="Figure series directory"),
    force: bool = typer.Option(False, "--force"),
) -> None:
    """Compute tables, growth metrics and figure series."""
    with _exit_on_error():
        config = _config(ctx, "analyze", dataset_dir=dataset)
        if out is None:
            _report(run("analyze", config, force))
            return
        check_prerequisites("analyze", config.dataset_dir)
        written = write_reports(
            load_dataset(config.dataset_dir),
            out,
            figures or out / "figures",
            config.analytics,
        )
        typer.echo(f"analyze: wrote {len(written)} files to {out}")


@app.command("validate")
def validate_cmd(
    ctx: typer.Context,
    dataset: Optional[Path] = typer.Option(None, "--dataset", help="Dataset directory"),
) -> None:
    """Check referential integrity and invariants; exit 1 on any violation."""
    with _exit_on_error():
        config = _config(ctx, "validate", dataset_dir=dataset)
        report = validate_dataset(config.dataset_dir)
        path = config.dataset_dir / VALIDATION_REPORT
        path.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
        for violation in report.violations:
            typer.echo(f"{violation.check}: {violation.key} {violation.detail}".rstrip())
        typer.echo(f"validate: {len(report.violations)} violations ({path})")
        if not report.ok:
            raise typer.Exit(code=1)


@app.command("export")
def export_cmd(
    ctx: typer.Context,
    fmt: str = typer.Option("csv", "--format", help="csv or jsonl"),
    out: Optional[Path] = typer.Option(None, "--out", help="Output file"),
) -> None:
    """Write a denormalized author-presentation table."""
    with _exit_on_error():
        if fmt not in EXPORT_FORMATS:
            raise ConfigurationError(f"--format must be one of {', '.join(EXPORT_FORMATS)}")
        config = _config(ctx, "export")
        path = export_dataset(config.dataset_dir, fmt, out)
        typer.echo(f"export: {path}")


@app.command("run-all")
def run_all_cmd(ctx: typer.Context, force: bool = typer.Option(False, "--force")) -> None:
    """Run every stage in dependency order."""
    with _exit_on_error():
        _report(run("all", _config(ctx, "all"), force))


@app.command("kappa")
def kappa_cmd(
    ctx: typer.Context,
    review: Optional[Path] = typer.Option(
        None, "--review", help="Methodology review CSV with a filled human_label column"
    ),
) -> None:
    """Compute Cohen's kappa between human and machine methodology labels."""
    with _exit_on_error():
        config = _config(ctx, "kappa")
        review = review or config.dataset_dir / REVIEW_METHODOLOGY
        report = kappa_from_review(review)
        path = config.dataset_dir / REVIEW_KAPPA
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
        kappa = "undefined" if report.kappa is None else f"{report.kappa:.3f}"
        typer.echo(f"kappa: {kappa} over {report.n} abstracts ({path})")


def main() -> None:
    app()


if __name__ == "__main__":
    main()
