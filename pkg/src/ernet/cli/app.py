"""CLI entry point for ernet."""

from __future__ import annotations

import dataclasses
import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import TYPE_CHECKING, Annotated

import click
import typer
from rich.console import Console
from rich.logging import RichHandler

from ernet.core.config import ConfigError, ModelConfig, TrainConfig, load_config, write_config
from ernet.core.geometry import TransformFormatError
from ernet.core.models import OutputMode
from ernet.core.report import ReportError
from ernet.core.trainer import NonFiniteLossError
from ernet.data.formats import default_registry
from ernet.data.volume import VolumeFormatError
from ernet.output.base import Renderer
from ernet.output.rich_output import RichRenderer, progress_line
from ernet.tensorcore import CheckpointError, MissingGradientError

if TYPE_CHECKING:
    from collections.abc import Iterator, Sequence

    from ernet.core.models import TrainRecord
    from ernet.data.dataset import ImagePair

app = typer.Typer(
    name="ernet",
    help="Joint multi-stage brain extraction and affine registration.",
    no_args_is_help=True,
    rich_markup_mode="rich",
)

logger = logging.getLogger(__name__)

RESOLVED_CONFIG_NAME = "config.yaml"
_FORMAT_ALIASES = {"nii": "nifti", "nifti": "nifti", "rvol": "rvol"}
_RUNTIME_ERRORS = (
    CheckpointError,
    MissingGradientError,
    NonFiniteLossError,
    OSError,
    ReportError,
    TransformFormatError,
    VolumeFormatError,
)


def version_callback(value: bool) -> None:
    """Print version and exit."""
    if value:
        from ernet import __version__

        typer.echo(f"ernet {__version__}")
        raise typer.Exit()


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    root = logging.getLogger("ernet")
    root.handlers = [RichHandler(console=Console(stderr=True), show_path=False)]
    root.setLevel(level)
    root.propagate = False


def _require_paths(*paths: Path | None) -> None:
    """Reject missing input paths before any work starts."""
    for path in paths:
        if path is not None and not path.exists():
            msg = f"Path does not exist: {path}"
            raise FileNotFoundError(msg)


@contextmanager
def _handle_errors() -> Iterator[None]:
    """Map failures to exit codes: 2 for runtime failures, 1 for invalid input or missing paths."""
    try:
        yield
    except FileNotFoundError as exc:
        typer.echo(f"Error: {exc}", err=True)
        raise typer.Exit(code=1) from None
    except _RUNTIME_ERRORS as exc:
        typer.echo(f"Error: {exc}", err=True)
        raise typer.Exit(code=2) from None
    except (ValueError, NotImplementedError) as exc:
        typer.echo(f"Error: {exc}", err=True)
        raise typer.Exit(code=1) from None


def _parse_output_mode(value: str) -> OutputMode:
    try:
        return OutputMode(value)
    except ValueError:
        valid = ", ".join(o.value for o in OutputMode)
        msg = f"Invalid output mode '{value}'. Choose from: {valid}"
        raise typer.BadParameter(msg) from None


def _parse_format(value: str) -> str:
    """Resolve a volume format name or alias to a registered format name."""
    name = _FORMAT_ALIASES.get(value.lower(), value.lower())
    if name not in default_registry().names():
        valid = ", ".join(sorted(_FORMAT_ALIASES))
        msg = f"Invalid format '{value}'. Choose from: {valid}"
        raise typer.BadParameter(msg)
    return name


def _get_renderer(output_mode: OutputMode) -> Renderer:
    if output_mode == OutputMode.rich:
        return RichRenderer()
    if output_mode == OutputMode.json:
        from ernet.output.json_output import JsonRenderer

        return JsonRenderer()
    msg = f"Output mode '{output_mode}' is not yet implemented"
    raise NotImplementedError(msg)


def _build_configs(
    config: Path | None,
    *,
    seed: int | None = None,
    stages: tuple[int, int] | None = None,
    lam: float | None = None,
    gamma: float | None = None,
    iterations: int | None = None,
    learning_rate: float | None = None,
    augment: str | None = None,
    checkpoint_dir: Path | None = None,
    width_divisor: int = 1,
) -> tuple[ModelConfig, TrainConfig]:
    """Read *config* (if any) and apply flag overrides on top."""
    from ernet.data.augment import preset

    model, train = load_config(config) if config is not None else (ModelConfig(), TrainConfig())
    model_overrides: dict[str, object] = {}
    if stages is not None and None not in stages:
        model_overrides["stages_extraction"], model_overrides["stages_registration"] = stages
    if lam is not None:
        model_overrides["lam"] = lam
    if gamma is not None:
        model_overrides["gamma"] = gamma
    train_overrides: dict[str, object] = {}
    if seed is not None:
        train_overrides["seed"] = seed
    if iterations is not None:
        train_overrides["iterations"] = iterations
    if learning_rate is not None:
        train_overrides["learning_rate"] = learning_rate
    if augment is not None:
        try:
            train_overrides["augmentation"] = preset(augment)
        except ValueError as exc:
            msg = f"augmentation: {exc}"
            raise ConfigError(msg) from None
    if checkpoint_dir is not None:
        train_overrides["checkpoint_dir"] = checkpoint_dir
    model = dataclasses.replace(model, **model_overrides)
    if width_divisor > 1:
        model = model.with_width_divisor(width_divisor)
    return model, dataclasses.replace(train, **train_overrides)


def _load_pairs(
    data: Path,
    target: Path | None = None,
    include: list[str] | None = None,
    exclude: list[str] | None = None,
) -> list[ImagePair]:
    """Pairs from a manifest file, or from a directory scanned against *target*."""
    from ernet.data.dataset import DatasetError, load_manifest, scan_atlas_directory

    if data.is_dir():
        if target is not None:
            return scan_atlas_directory(
                data, target, include=include or (), exclude=exclude or ()
            )
        manifest = data / "manifest.json"
        if manifest.is_file():
            return load_manifest(manifest)
        msg = f"{data} has no manifest.json; pass --target to scan it as an atlas directory"
        raise DatasetError(msg)
    if not data.exists():
        msg = f"Path does not exist: {data}"
        raise FileNotFoundError(msg)
    return load_manifest(data)


# ---------------------------------------------------------------------------
# Shared options
# ---------------------------------------------------------------------------

ConfigOption = Annotated[
    Path | None,
    typer.Option("--config", "-c", help="JSON or YAML file with 'model' and 'train' sections."),
]
SeedOption = Annotated[int | None, typer.Option("--seed", help="Random seed (overrides config).")]
StagesOption = Annotated[
    tuple[int, int] | None,
    typer.Option("--stages", help="Extraction and registration stage counts M N."),
]
LambdaOption = Annotated[
    float | None, typer.Option("--lambda", help="Mask regularizer weight.", min=0.0)
]
GammaOption = Annotated[float | None, typer.Option("--gamma", help="Sigmoid slope.")]
IterationsOption = Annotated[
    int | None, typer.Option("--iterations", "-n", help="Training iterations.", min=0)
]
OutputOption = Annotated[
    str, typer.Option("--output", "-o", help="Output mode: rich or json.")
]
WorkersOption = Annotated[
    int,
    typer.Option("--workers", "-w", help="Parallel evaluation workers. 0=auto, 1=serial.", min=0),
]
WidthDivisorOption = Annotated[
    int,
    typer.Option("--width-divisor", help="Divide every layer width by this factor.", min=1),
]
FormatOption = Annotated[str, typer.Option("--format", "-f", help="Volume format: rvol or nii.")]


@app.callback()
def cli(
    verbose: Annotated[
        int,
        typer.Option("--verbose", "-v", count=True, help="More log output (-v info, -vv debug)."),
    ] = 0,
    version: Annotated[
        bool | None,
        typer.Option(
            "--version",
            "-V",
            callback=version_callback,
            is_eager=True,
            help="Show version and exit.",
        ),
    ] = None,
) -> None:
    """Train, run and verify ERNet extraction and registration models."""
    _configure_logging(verbose)


def _make_progress(output_mode: OutputMode, every: int) -> _ProgressPrinter | None:
    if output_mode != OutputMode.rich or every <= 0:
        return None
    return _ProgressPrinter(every)


class _ProgressPrinter:
    """Prints every *every*-th training record and every validation record."""

    def __init__(self, every: int, console: Console | None = None) -> None:
        self._every = every
        self._console = console or Console()

    def __call__(self, record: TrainRecord) -> None:
        if record.iteration % self._every == 0 or record.val_dice_ext is not None:
            self._console.print(progress_line(record))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


@app.command()
def phantom(
    out: Annotated[Path, typer.Argument(help="Directory to write the dataset into.")],
    seed: Annotated[int, typer.Option("--seed", help="Seed of the first phantom.")] = 0,
    train_count: Annotated[int, typer.Option("--train", help="Training phantoms.", min=0)] = 40,
    val_count: Annotated[int, typer.Option("--val", help="Validation phantoms.", min=0)] = 5,
    test_count: Annotated[int, typer.Option("--test", help="Test phantoms.", min=0)] = 10,
    extent: Annotated[
        int, typer.Option("--extent", help="Cubic grid extent (>= 32, divisible by 4).")
    ] = 32,
    augment: Annotated[
        str, typer.Option("--augment", help="Perturbation preset: lpba40, cc359 or none.")
    ] = "lpba40",
    fmt: FormatOption = "rvol",
) -> None:
    """Generate synthetic head phantoms with known masks, labels and transforms."""
    from ernet.data.augment import preset
    from ernet.data.dataset import write_phantom_dataset

    format_name = _parse_format(fmt)
    with _handle_errors():
        manifests = write_phantom_dataset(
            out,
            seed,
            counts={"train": train_count, "val": val_count, "test": test_count},
            extents=(extent, extent, extent),
            ranges=preset(augment),
            fmt=format_name,
        )
    for split, manifest in manifests.items():
        typer.echo(f"{split}: {manifest}")


@app.command()
def train(
    data: Annotated[Path, typer.Argument(help="Training manifest or atlas directory.")],
    val: Annotated[
        Path | None, typer.Option("--val", help="Validation manifest or directory.")
    ] = None,
    target: Annotated[
        Path | None, typer.Option("--target", "-t", help="Shared target for directory scans.")
    ] = None,
    config: ConfigOption = None,
    seed: SeedOption = None,
    stages: StagesOption = None,
    lam: LambdaOption = None,
    gamma: GammaOption = None,
    iterations: IterationsOption = None,
    learning_rate: Annotated[
        float | None, typer.Option("--lr", help="Adam learning rate.")
    ] = None,
    augment: Annotated[
        str | None, typer.Option("--augment", help="Augmentation preset: lpba40, cc359, none.")
    ] = None,
    checkpoint_dir: Annotated[
        Path | None, typer.Option("--checkpoint-dir", help="Where checkpoints are written.")
    ] = None,
    resume: Annotated[
        Path | None, typer.Option("--resume", help="Resume from a saved training state.")
    ] = None,
    log: Annotated[Path | None, typer.Option("--log", help="Write the training log CSV.")] = None,
    width_divisor: WidthDivisorOption = 1,
    output: OutputOption = "rich",
) -> None:
    """Train both networks end to end without labels."""
    from ernet.core.pipeline import ErnetModel
    from ernet.core.trainer import train as run_training

    output_mode = _parse_output_mode(output)
    with _handle_errors():
        _require_paths(data, val, target, config, resume)
        model_config, train_config = _build_configs(
            config,
            seed=seed,
            stages=stages,
            lam=lam,
            gamma=gamma,
            iterations=iterations,
            learning_rate=learning_rate,
            augment=augment,
            checkpoint_dir=checkpoint_dir,
            width_divisor=width_divisor,
        )
        pairs = _load_pairs(data, target)
        val_pairs = _load_pairs(val, target) if val is not None else []
        train_config.checkpoint_dir.mkdir(parents=True, exist_ok=True)
        write_config(train_config.checkpoint_dir / RESOLVED_CONFIG_NAME, model_config, train_config)
        model = ErnetModel(model_config, seed=train_config.seed)
        result = run_training(
            model,
            pairs,
            train_config,
            val_pairs=val_pairs,
            resume=resume,
            log_path=log,
            progress=_make_progress(output_mode, train_config.log_every),
        )
    _get_renderer(output_mode).render_training(result)


@app.command()
def infer(
    model_path: Annotated[Path, typer.Argument(help="Model checkpoint file or directory.")],
    source: Annotated[Path, typer.Argument(help="Source volume.")],
    target: Annotated[Path, typer.Argument(help="Target volume.")],
    out: Annotated[Path, typer.Option("--out", "-O", help="Output directory.")] = Path("out"),
    fmt: FormatOption = "rvol",
) -> None:
    """Extract and register one source volume onto a target."""
    from ernet.core.geometry import CoordinateFrame, format_transform
    from ernet.core.pipeline import infer as run_inference
    from ernet.core.pipeline import load_model, write_inference
    from ernet.data.volume import read_volume

    ext = default_registry().extension_for(_parse_format(fmt))
    with _handle_errors():
        _require_paths(model_path, source, target)
        model = load_model(model_path)
        source_volume = read_volume(source)
        target_volume = read_volume(target)
        result = run_inference(model, source_volume, target_volume)
        written = write_inference(result, out, extension=ext, spacing=source_volume.spacing)
    frame = CoordinateFrame.for_shape(source_volume.extents)
    typer.echo(format_transform(result.transform, frame), nl=False)
    typer.echo(f"Wrote {len(written)} file(s) to {out}")


@app.command("eval")
def evaluate_command(
    model_path: Annotated[Path, typer.Argument(help="Model checkpoint file or directory.")],
    data: Annotated[Path, typer.Argument(help="Manifest or atlas directory with ground truth.")],
    target: Annotated[
        Path | None, typer.Option("--target", "-t", help="Shared target for directory scans.")
    ] = None,
    include: Annotated[
        list[str] | None, typer.Option("--include", "-I", help="Glob pattern(s) to include.")
    ] = None,
    exclude: Annotated[
        list[str] | None, typer.Option("--exclude", "-E", help="Glob pattern(s) to exclude.")
    ] = None,
    workers: WorkersOption = 1,
    output: OutputOption = "rich",
    report: Annotated[
        Path | None, typer.Option("--report", help="Save the report as versioned JSON.")
    ] = None,
    csv_path: Annotated[
        Path | None, typer.Option("--csv", help="Write the metric summary as CSV.")
    ] = None,
    baseline: Annotated[
        Path | None, typer.Option("--baseline", help="Compare against a saved report.")
    ] = None,
) -> None:
    """Score extraction and registration against ground truth."""
    from ernet.core.pipeline import evaluate, load_model
    from ernet.core.report import (
        compare_to_baseline,
        load_report,
        render_baseline,
        save_report,
        write_summary_csv,
    )

    output_mode = _parse_output_mode(output)
    with _handle_errors():
        _require_paths(model_path, data, target, baseline)
        model = load_model(model_path)
        pairs = _load_pairs(data, target, include, exclude)
        result = evaluate(model, pairs, workers=workers)
        if report is not None:
            save_report(result, report)
        if csv_path is not None:
            write_summary_csv(result, csv_path)
        if baseline is not None:
            baseline_report = load_report(baseline)
            if baseline_report.stages != result.stages:
                typer.echo(
                    f"Warning: baseline stages {baseline_report.stages} "
                    f"differ from current stages {result.stages}.",
                    err=True,
                )
            render_baseline(compare_to_baseline(baseline_report, result))
            return
    _get_renderer(output_mode).render_report(result)


@app.command()
def verify(
    seed: Annotated[int, typer.Option("--seed", help="Seed of the random instances.")] = 0,
    instances: Annotated[
        int, typer.Option("--instances", help="Random instances per equivalence check.", min=1)
    ] = 50,
    quick: Annotated[
        bool, typer.Option("--quick", help="Skip the end-to-end model gradient check.")
    ] = False,
    output: OutputOption = "rich",
) -> None:
    """Check fast operations against brute-force oracles and finite differences."""
    from ernet.refcheck.suites import run_all

    output_mode = _parse_output_mode(output)
    with _handle_errors():
        results = run_all(seed, instances=instances, include_model=not quick)
    _get_renderer(output_mode).render_suites(results)
    if not all(r.passed for r in results):
        raise typer.Exit(code=2)


@app.command()
def ablate(
    data: Annotated[Path, typer.Argument(help="Training manifest or atlas directory.")],
    test: Annotated[Path, typer.Argument(help="Evaluation manifest or directory.")],
    target: Annotated[
        Path | None, typer.Option("--target", "-t", help="Shared target for directory scans.")
    ] = None,
    stage_values: Annotated[
        list[int] | None,
        typer.Option("--stage", "-s", help="Stage count for both axes of the grid. Repeatable."),
    ] = None,
    config: ConfigOption = None,
    seed: SeedOption = None,
    iterations: IterationsOption = None,
    checkpoint_dir: Annotated[
        Path | None, typer.Option("--checkpoint-dir", help="Root for per-cell checkpoints.")
    ] = None,
    width_divisor: WidthDivisorOption = 1,
    workers: WorkersOption = 1,
    output: OutputOption = "rich",
) -> None:
    """Train and evaluate every (M, N) stage combination."""
    from ernet.core.experiments import ABLATION_STAGES
    from ernet.core.experiments import ablate as run_ablation

    output_mode = _parse_output_mode(output)
    values = tuple(stage_values) if stage_values else ABLATION_STAGES
    with _handle_errors():
        _require_paths(data, test, target, config)
        model_config, train_config = _build_configs(
            config,
            seed=seed,
            iterations=iterations,
            checkpoint_dir=checkpoint_dir,
            width_divisor=width_divisor,
        )
        cells = run_ablation(
            model_config,
            train_config,
            _load_pairs(data, target),
            _load_pairs(test, target),
            grid=[(m, n) for m in values for n in values],
            workers=workers,
        )
    _get_renderer(output_mode).render_ablation(cells)


@app.command()
def sweep(
    parameter: Annotated[str, typer.Argument(help="Hyperparameter to sweep: lambda or gamma.")],
    data: Annotated[Path, typer.Argument(help="Training manifest or atlas directory.")],
    test: Annotated[Path, typer.Argument(help="Evaluation manifest or directory.")],
    values: Annotated[
        list[float] | None, typer.Option("--value", help="Value to try. Repeatable.")
    ] = None,
    target: Annotated[
        Path | None, typer.Option("--target", "-t", help="Shared target for directory scans.")
    ] = None,
    config: ConfigOption = None,
    seed: SeedOption = None,
    stages: StagesOption = None,
    iterations: IterationsOption = None,
    checkpoint_dir: Annotated[
        Path | None, typer.Option("--checkpoint-dir", help="Root for per-value checkpoints.")
    ] = None,
    width_divisor: WidthDivisorOption = 1,
    workers: WorkersOption = 1,
    output: OutputOption = "rich",
) -> None:
    """Train one model per value of lambda or gamma."""
    from ernet.core.experiments import SWEEP_DEFAULTS
    from ernet.core.experiments import sweep as run_sweep

    output_mode = _parse_output_mode(output)
    if parameter not in SWEEP_DEFAULTS:
        msg = f"Cannot sweep '{parameter}'. Choose from: {', '.join(SWEEP_DEFAULTS)}"
        raise typer.BadParameter(msg)
    with _handle_errors():
        _require_paths(data, test, target, config)
        model_config, train_config = _build_configs(
            config,
            seed=seed,
            stages=stages,
            iterations=iterations,
            checkpoint_dir=checkpoint_dir,
            width_divisor=width_divisor,
        )
        points = run_sweep(
            parameter,  # type: ignore[arg-type]
            values or SWEEP_DEFAULTS[parameter],
            model_config,
            train_config,
            _load_pairs(data, target),
            _load_pairs(test, target),
            workers=workers,
        )
    _get_renderer(output_mode).render_sweep(points)


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------


def main(argv: Sequence[str] | None = None) -> int:
    """Parse *argv*, run the command and return its exit status.

    Usage errors (unknown flags, missing arguments, bad values) return 1.
    """
    command = typer.main.get_command(app)
    try:
        rv = command.main(
            args=list(argv) if argv is not None else None,
            prog_name="ernet",
            standalone_mode=False,
        )
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        return 1
    return rv if isinstance(rv, int) else 0


def run() -> None:
    """Console-script entry point."""
    sys.exit(main())
