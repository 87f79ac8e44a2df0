"""
creakbench - unified CLI entry point.

Usage:
    creakbench init          # Initialize config files
    creakbench analyze       # Voice features + creak labels for a manifest
    creakbench adapt         # Pitch-adapt a corpus (decorrelate creak and pitch)
    creakbench corr          # Creak/pitch correlation report
    creakbench calibrate     # Fit the proxy creak labeler
    creakbench eer           # EER per creak shift
    creakbench synthexp      # Synthetic three-flow experiment
    creakbench flow train|manipulate|loglik|sample

Exit codes: 0 success, 2 input error, 3 numerical failure.
"""
from contextlib import contextmanager
from enum import Enum
from pathlib import Path
from typing import Iterator, Optional

import typer

from creakbench import __version__
from creakbench.config import SEED_ENV

app = typer.Typer(
    help="creakbench - creak/pitch disentanglement toolkit for speaker embeddings.",
    no_args_is_help=True,
    add_completion=False,
)

flow_app = typer.Typer(
    help="""Conditional normalizing flow over speaker embeddings.

Embedding files are JSON Lines:
  {"id": "u1", "speaker_id": "s1", "embedding": [...], "attrs": [6 floats]}

attrs order: breathiness, roughness, resonance, weight, mean_pitch_norm, creak_prob.
""",
    no_args_is_help=True,
)
app.add_typer(flow_app, name="flow")


class GroupBy(str, Enum):
    gender = "gender"
    overall = "overall"


class Preset(str, Enum):
    data = "data"
    reference = "reference"


class Trace(str, Enum):
    exact = "exact"
    hutchinson = "hutchinson"


class Pairing(str, Enum):
    exhaustive = "exhaustive"
    balanced = "balanced"


class LabelerMode(str, Enum):
    external_first = "external-first"
    proxy = "proxy"


SeedOption = typer.Option(None, "--seed", envvar=SEED_ENV, help="Random seed (default: config seed, else 0)")


def parse_beta_grid(text: str | None) -> tuple[float, ...]:
    """'default' (or empty) for -1.25..1.25 step 0.25, 'start:stop:step', or comma-separated values."""
    from creakbench.synthexp import BETA_GRID

    if not text or text.strip() == "default":
        return BETA_GRID
    try:
        if ":" in text:
            start, stop, step = (float(p) for p in text.split(":"))
            if step <= 0 or stop < start:
                raise ValueError("need start <= stop and step > 0")
            count = int(round((stop - start) / step)) + 1
            return tuple(round(start + i * step, 10) for i in range(count))
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError as e:
        raise typer.BadParameter(f"Invalid beta grid '{text}': {e}") from e


def _seed(seed: Optional[int]) -> int:
    from creakbench.config import default_seed

    return seed if seed is not None else default_seed()


@contextmanager
def exit_codes() -> Iterator[None]:
    """Map creakbench errors to the exit-code contract."""
    from creakbench.errors import AudioIOError, InputError, NumericalError
    from creakbench.log import console

    try:
        yield
    except (InputError, AudioIOError) as e:
        console.print(f"[red]Error:[/] {e}")
        raise typer.Exit(2) from e
    except NumericalError as e:
        console.print(f"[red]Numerical failure:[/] {e}")
        raise typer.Exit(3) from e


def version_callback(value: bool) -> None:
    if value:
        print(f"creakbench {__version__}")
        raise typer.Exit()


@app.callback()
def callback(
    version: bool = typer.Option(
        None, "--version", callback=version_callback, is_eager=True,
        help="Show version and exit."
    ),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging."),
) -> None:
    """Creak/pitch analysis, corpus adaptation and flow-based creak manipulation."""
    if verbose:
        from creakbench.log import configure
        configure("DEBUG")


@app.command()
def init(
    force: bool = typer.Option(False, "--force", "-f", help="Overwrite existing config files"),
) -> None:
    """Initialize configuration files."""
    from creakbench.commands.init import run_init
    run_init(force=force)


@app.command()
def analyze(
    manifest: Path = typer.Option(..., "--manifest", "-m", help="Input manifest (JSONL)"),
    out: Path = typer.Option(..., "--out", "-o", help="Output features CSV"),
    calibration: Optional[Path] = typer.Option(None, "--calibration", help="Calibration file for the proxy labeler"),
    labeler: LabelerMode = typer.Option(LabelerMode.external_first, "--labeler", help="Creak label source"),
    workers: int = typer.Option(1, "--workers", "-w", min=1, help="Worker threads"),
) -> None:
    """Extract voice features and creak labels for every utterance."""
    from creakbench.commands.analyze import run_analyze
    with exit_codes():
        run_analyze(manifest, out, calibration, labeler.value, workers)


@app.command()
def adapt(
    manifest: Path = typer.Option(..., "--manifest", "-m", help="Input manifest (JSONL, with gender)"),
    out: Path = typer.Option(..., "--out", "-o", help="Output directory"),
    b: Optional[float] = typer.Option(None, "--b", min=0.0, help="Semitone spread (default: config, 2)"),
    seed: Optional[int] = SeedOption,
    preset: Optional[Preset] = typer.Option(None, "--preset", help="Gender means from data or the 119/195 Hz preset"),
    keep_labels: bool = typer.Option(False, "--keep-labels", help="Keep original creak labels instead of relabeling"),
    workers: int = typer.Option(1, "--workers", "-w", min=1, help="Worker threads"),
) -> None:
    """Shift each utterance to its gender's mean pitch plus b-semitone noise."""
    from creakbench.commands.adapt import run_adapt
    with exit_codes():
        run_adapt(manifest, out, b, _seed(seed), preset.value if preset else None, not keep_labels, workers)


@app.command()
def corr(
    features: Path = typer.Option(..., "--features", "-f", help="Features CSV from 'analyze'"),
    out: Path = typer.Option(..., "--out", "-o", help="Output report CSV"),
    group_by: GroupBy = typer.Option(GroupBy.gender, "--group-by", help="Per gender (plus overall) or overall only"),
    histogram: Optional[Path] = typer.Option(None, "--histogram", help="Also write pitch histograms by creak class"),
    bins: int = typer.Option(20, "--bins", min=1, help="Histogram bins"),
) -> None:
    """Correlation and slope of creak probability against mean pitch."""
    from creakbench.commands.corr import run_corr
    with exit_codes():
        run_corr(features, out, group_by.value, histogram, bins)


@app.command()
def calibrate(
    features: Path = typer.Option(..., "--features", "-f", help="Features CSV with external creak labels"),
    out: Path = typer.Option(..., "--out", "-o", help="Calibration file to write"),
    all_rows: bool = typer.Option(False, "--all-rows", help="Use every row, not only externally labeled ones"),
) -> None:
    """Fit the proxy creak labeler to external labels."""
    from creakbench.commands.calibrate import run_calibrate
    with exit_codes():
        run_calibrate(features, out, external_only=not all_rows)


@app.command()
def eer(
    out: Path = typer.Option(..., "--out", "-o", help="Output EER CSV"),
    trials: Optional[Path] = typer.Option(None, "--trials", help="Trials CSV (score, same_speaker[, beta])"),
    originals: Optional[Path] = typer.Option(None, "--originals", help="Unmanipulated embeddings (JSONL)"),
    manipulated: Optional[Path] = typer.Option(None, "--manipulated", help="Manipulated embeddings (JSONL, with beta)"),
    pairing: Pairing = typer.Option(Pairing.exhaustive, "--pairing", help="Trial pairing policy"),
    max_trials: int = typer.Option(1_000_000, "--max-trials", min=2, help="Cap before random sampling"),
    seed: Optional[int] = SeedOption,
) -> None:
    """Equal error rate per creak shift factor."""
    from creakbench.commands.eer import run_eer
    with exit_codes():
        run_eer(out, trials, originals, manipulated, pairing.value, max_trials, _seed(seed))


@app.command()
def synthexp(
    out: Path = typer.Option(..., "--out", "-o", help="Output directory"),
    seed: Optional[int] = SeedOption,
    b: Optional[float] = typer.Option(None, "--b", min=0.0, help="Decorrelation spread in semitones"),
    beta_grid: Optional[str] = typer.Option(None, "--beta-grid", help="'default', 'start:stop:step' or comma list"),
    n_speakers: Optional[int] = typer.Option(None, "--speakers", min=2),
    utterances: Optional[int] = typer.Option(None, "--utterances", min=1, help="Utterances per speaker"),
    dim: Optional[int] = typer.Option(None, "--dim", min=3, help="Embedding dimension"),
    rho: Optional[float] = typer.Option(None, "--rho", help="Creak/pitch correlation"),
    hidden: Optional[int] = typer.Option(None, "--hidden", min=1),
    steps: Optional[int] = typer.Option(None, "--steps", min=4, help="RK4 steps"),
    trace: Optional[Trace] = typer.Option(None, "--trace"),
    epochs: Optional[int] = typer.Option(None, "--epochs", min=1),
    learning_rate: Optional[float] = typer.Option(None, "--lr"),
    combined_ratio: Optional[float] = typer.Option(None, "--combined-ratio", help="Adapted share in the combined set"),
    export_corpus: bool = typer.Option(False, "--export-corpus", help="Also write the corpora as embedding files"),
) -> None:
    """Train base/adapted/combined flows on synthetic speakers and compare EER."""
    from creakbench.commands.synthexp import run_synthexp
    with exit_codes():
        ok = run_synthexp(
            out,
            seed=_seed(seed),
            export_corpus=export_corpus,
            b=b,
            betas=parse_beta_grid(beta_grid) if beta_grid else None,
            n_speakers=n_speakers,
            utterances_per_speaker=utterances,
            d=dim,
            rho=rho,
            hidden=hidden,
            steps=steps,
            trace=trace.value if trace else None,
            epochs=epochs,
            learning_rate=learning_rate,
            combined_ratio=combined_ratio,
        )
    if not ok:
        raise typer.Exit(3)


# --- Flow subcommands ---

@flow_app.command("train")
def flow_train(
    data: Path = typer.Option(..., "--data", "-d", help="Training embeddings (JSONL)"),
    model: Path = typer.Option(..., "--model", help="Model file to write"),
    seed: Optional[int] = SeedOption,
    hidden: Optional[int] = typer.Option(None, "--hidden", min=1),
    steps: Optional[int] = typer.Option(None, "--steps", min=4, help="RK4 steps"),
    trace: Optional[Trace] = typer.Option(None, "--trace"),
    epochs: Optional[int] = typer.Option(None, "--epochs", min=1),
    batch_size: Optional[int] = typer.Option(None, "--batch-size", min=1),
    learning_rate: Optional[float] = typer.Option(None, "--lr"),
) -> None:
    """Train a conditional flow by maximum likelihood."""
    from creakbench.commands.flow import run_train
    with exit_codes():
        run_train(
            data, model, _seed(seed), hidden, steps, trace.value if trace else None, epochs, batch_size, learning_rate
        )


@flow_app.command("manipulate")
def flow_manipulate(
    model: Path = typer.Option(..., "--model", help="Trained model file"),
    data: Path = typer.Option(..., "--data", "-d", help="Embeddings to manipulate (JSONL)"),
    out: Path = typer.Option(..., "--out", "-o", help="Output embeddings (JSONL, with beta)"),
    beta_grid: str = typer.Option("default", "--beta-grid", help="'default', 'start:stop:step' or comma list"),
) -> None:
    """Shift the creak attribute and re-decode the embeddings."""
    from creakbench.commands.flow import run_manipulate
    with exit_codes():
        run_manipulate(model, data, out, list(parse_beta_grid(beta_grid)))


@flow_app.command("loglik")
def flow_loglik(
    model: Path = typer.Option(..., "--model", help="Trained model file"),
    data: Path = typer.Option(..., "--data", "-d", help="Embeddings (JSONL)"),
) -> None:
    """Print per-embedding log-likelihoods."""
    from creakbench.commands.flow import run_loglik
    with exit_codes():
        run_loglik(model, data)


@flow_app.command("sample")
def flow_sample(
    model: Path = typer.Option(..., "--model", help="Trained model file"),
    attrs: str = typer.Option(..., "--attrs", help="Six comma-separated attribute values"),
    n: int = typer.Option(10, "--n", min=1, help="Number of embeddings"),
    out: Path = typer.Option(..., "--out", "-o", help="Output embeddings (JSONL)"),
    seed: Optional[int] = SeedOption,
) -> None:
    """Generate new embeddings for the given attributes."""
    from creakbench.commands.flow import run_sample
    try:
        values = [float(v) for v in attrs.split(",")]
    except ValueError as e:
        raise typer.BadParameter(f"Invalid --attrs '{attrs}'") from e
    with exit_codes():
        run_sample(model, values, n, out, _seed(seed))


def main() -> None:
    """Entry point for the CLI."""
    app()


if __name__ == "__main__":
    main()
