"""Shared fixtures: synthetic voices, manifests on disk, config isolation."""
import json
import logging
from pathlib import Path

import numpy as np
import pytest

from creakbench.audio.core import AudioClip, write_wav
from creakbench.audio.synth import GlottalSpec, creakiness_spec, synth_glottal


@pytest.fixture(autouse=True)
def isolated_config(tmp_path_factory, monkeypatch):
    """Point config at an empty location and clear the seed env var."""
    config_dir = tmp_path_factory.mktemp("config")
    monkeypatch.setattr("creakbench.config.CONFIG_PATH", config_dir / "creakbench.yaml")
    monkeypatch.delenv("CREAKBENCH_SEED", raising=False)
    return config_dir


@pytest.fixture
def vowel_120() -> AudioClip:
    return synth_glottal(GlottalSpec(f0_contour_hz=120.0), 1.0)


@pytest.fixture
def vowel_200() -> AudioClip:
    return synth_glottal(GlottalSpec(f0_contour_hz=200.0), 1.0)


def make_corpus(root: Path, specs: list[dict], duration_s: float = 0.5) -> Path:
    """Write one WAV per spec and a manifest referencing them; returns the manifest path.

    Each spec: id, speaker_id, gender (optional), f0, creak (0..1), missing (skip the WAV).
    """
    wav_dir = root / "wav"
    wav_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, spec in enumerate(specs):
        rel = f"wav/{spec['id']}.wav"
        if not spec.get("missing"):
            voice = creakiness_spec(spec.get("creak", 0.0), spec.get("f0", 120.0))
            write_wav(synth_glottal(voice, duration_s, rng_seed=i), root / rel)
        row = {"id": spec["id"], "audio_path": rel, "speaker_id": spec["speaker_id"]}
        for key in ("gender", "creak_prob", "mean_pitch_hz"):
            if key in spec:
                row[key] = spec[key]
        lines.append(json.dumps(row))
    manifest = root / "manifest.jsonl"
    manifest.write_text("\n".join(lines) + ("\n" if lines else ""))
    return manifest


@pytest.fixture
def small_corpus(tmp_path) -> Path:
    return make_corpus(tmp_path / "corpus", [
        {"id": "m1", "speaker_id": "s1", "gender": "male", "f0": 140.0},
        {"id": "m2", "speaker_id": "s1", "gender": "male", "f0": 100.0, "creak": 0.5},
        {"id": "f1", "speaker_id": "s2", "gender": "female", "f0": 220.0},
        {"id": "f2", "speaker_id": "s2", "gender": "female", "f0": 180.0, "creak": 0.3},
    ])


def embedding_rows(embeddings: np.ndarray, attrs: np.ndarray, speakers: list[str] | None = None) -> list[dict]:
    speakers = speakers or [f"s{i}" for i in range(len(embeddings))]
    return [
        {"id": f"u{i}", "speaker_id": spk, "embedding": [float(v) for v in e], "attrs": [float(v) for v in a]}
        for i, (spk, e, a) in enumerate(zip(speakers, embeddings, attrs))
    ]


def write_rows(rows: list[dict], path: Path) -> Path:
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return path


@pytest.fixture
def flow_data(tmp_path) -> Path:
    """60 two-dimensional embeddings whose mean tracks the creak attribute."""
    rng = np.random.default_rng(7)
    attrs = np.zeros((60, 6))
    attrs[:, 5] = rng.uniform(0, 1, 60)
    attrs[:, 4] = rng.standard_normal(60)
    embeddings = np.column_stack([attrs[:, 5] + 0.3 * rng.standard_normal(60), rng.standard_normal(60)])
    speakers = [f"s{i // 3}" for i in range(60)]
    return write_rows(embedding_rows(embeddings, attrs, speakers), tmp_path / "train.jsonl")


@pytest.fixture
def corpus_factory():
    return make_corpus


@pytest.fixture
def embeddings_file(tmp_path):
    """Write (embeddings, attrs[, speakers]) as an embedding file under tmp_path."""

    def write(name: str, embeddings: np.ndarray, attrs: np.ndarray, speakers: list[str] | None = None) -> Path:
        return write_rows(embedding_rows(embeddings, attrs, speakers), tmp_path / name)

    return write


@pytest.fixture
def package_log(caplog):
    """caplog wired to the package logger, which does not propagate to root."""
    logger = logging.getLogger("creakbench")
    logger.addHandler(caplog.handler)
    caplog.set_level(logging.DEBUG, logger="creakbench")
    yield caplog
    logger.removeHandler(caplog.handler)
