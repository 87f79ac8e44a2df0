"""
Flow commands: train, manipulate, loglik, sample.

Embedding files are JSON Lines rows {id, speaker_id, embedding, attrs}.
"""
from pathlib import Path

import numpy as np
from rich.console import Console

from creakbench.config import get_section
from creakbench.flow import (
    AttributeVector,
    FlowModel,
    SolverConfig,
    TrainHyper,
    log_likelihood,
    manipulate,
    sample,
    shift_creak_array,
    train,
)
from creakbench.manifest import EmbeddingTable, read_embeddings, write_embeddings


def _flow_settings(**overrides) -> dict:
    """The 'flow' config section with non-None overrides applied."""
    settings = dict(get_section("flow"))
    settings.update({k: v for k, v in overrides.items() if v is not None})
    return settings


def run_train(
    data: Path,
    model_out: Path,
    seed: int = 0,
    hidden: int | None = None,
    steps: int | None = None,
    trace: str | None = None,
    epochs: int | None = None,
    batch_size: int | None = None,
    learning_rate: float | None = None,
) -> FlowModel:
    """Train on an embedding file and save the model."""
    console = Console(stderr=True)
    settings = _flow_settings(
        hidden=hidden, steps=steps, trace=trace, epochs=epochs, batch_size=batch_size, learning_rate=learning_rate
    )
    table = read_embeddings(data)
    hyper = TrainHyper(
        batch_size=settings["batch_size"],
        learning_rate=settings["learning_rate"],
        epochs=settings["epochs"],
        seed=seed,
        hidden=settings["hidden"],
        trace=settings["trace"],
        hutchinson_probes=settings["hutchinson_probes"],
    )
    model = train(table.embeddings, table.attrs, hyper, SolverConfig(steps=settings["steps"]))
    model.save(model_out)
    console.print(f"[green]Trained on {len(table)} embeddings (d={table.dim})[/]: final NLL {model.final_nll:.6f}")
    console.print(f"Model: {model_out}")
    return model


def run_manipulate(model_path: Path, data: Path, out: Path, betas: list[float]) -> None:
    """Shift creak by each beta and write all manipulated embeddings (with their beta)."""
    console = Console(stderr=True)
    model = FlowModel.load(model_path)
    table = read_embeddings(data)
    parts = []
    for beta in betas:
        shifted = shift_creak_array(table.attrs, beta)
        parts.append(EmbeddingTable(
            ids=table.ids,
            speaker_ids=table.speaker_ids,
            embeddings=manipulate(model, table.embeddings, table.attrs, shifted),
            attrs=shifted,
            betas=np.full(len(table), beta),
        ))
    merged = EmbeddingTable(
        ids=[i for p in parts for i in p.ids],
        speaker_ids=[s for p in parts for s in p.speaker_ids],
        embeddings=np.concatenate([p.embeddings for p in parts]),
        attrs=np.concatenate([p.attrs for p in parts]),
        betas=np.concatenate([p.betas for p in parts]),
    )
    write_embeddings(merged, out)
    console.print(f"[green]Manipulated {len(table)} embeddings at {len(betas)} beta value(s)[/] -> {out}")


def run_loglik(model_path: Path, data: Path) -> np.ndarray:
    """Print 'id<TAB>log-likelihood' per embedding on stdout."""
    console = Console(stderr=True)
    model = FlowModel.load(model_path)
    table = read_embeddings(data)
    values = log_likelihood(model, table.embeddings, table.attrs)
    for uid, value in zip(table.ids, values):
        print(f"{uid}\t{value!r}")
    console.print(f"Mean log-likelihood {values.mean():.6f} (NLL {-values.mean():.6f}) over {len(values)} embeddings")
    return values


def run_sample(model_path: Path, attrs: list[float], n: int, out: Path, seed: int = 0) -> None:
    """Decode n standard-normal draws at the given attributes."""
    console = Console(stderr=True)
    model = FlowModel.load(model_path)
    a = AttributeVector.from_array(attrs)
    embeddings = sample(model, a, n, seed)
    write_embeddings(
        EmbeddingTable(
            ids=[f"sample{i}" for i in range(n)],
            speaker_ids=[f"sample{i}" for i in range(n)],
            embeddings=embeddings,
            attrs=np.repeat(a.to_array()[None, :], n, axis=0),
        ),
        out,
    )
    console.print(f"[green]Sampled {n} embedding(s)[/] -> {out}")
