"""Utterance manifests.

Manifests are JSON Lines, one utterance per line:

    {"id": "u1", "audio_path": "wav/u1.wav", "speaker_id": "s1", "gender": "male",
     "creak_prob": 0.42, "mean_pitch_hz": 118.0, "attrs": [0, 0, 0, 0, 0.1, 0.42]}

`creak_prob`, `mean_pitch_hz` and `attrs` are optional. Relative audio paths
resolve against the manifest's directory. Adaptation adds
`delta_semitones`, `noise_u` and `adapted_path`.

The same module reads and writes the embedding files used by the flow
commands and the CSV tables the commands exchange.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np
import pandas as pd

from creakbench.errors import DimensionError, ManifestError

REQUIRED_KEYS = ("id", "audio_path", "speaker_id")
N_ATTRS = 6


@dataclass
class ManifestRow:
    """One utterance."""

    id: str
    audio_path: str
    speaker_id: str
    gender: str | None = None
    creak_prob: float | None = None
    mean_pitch_hz: float | None = None
    attrs: list[float] | None = None
    base_dir: Path | None = field(default=None, compare=False, repr=False)
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def resolved_audio_path(self) -> Path:
        path = Path(self.audio_path)
        if not path.is_absolute() and self.base_dir is not None:
            path = self.base_dir / path
        return path

    def to_dict(self) -> dict:
        """Convert to JSON-serializable dict (optional keys omitted when unset)."""
        out: dict[str, Any] = {"id": self.id, "audio_path": self.audio_path, "speaker_id": self.speaker_id}
        if self.gender is not None:
            out["gender"] = self.gender
        if self.creak_prob is not None:
            out["creak_prob"] = self.creak_prob
        if self.mean_pitch_hz is not None:
            out["mean_pitch_hz"] = self.mean_pitch_hz
        if self.attrs is not None:
            out["attrs"] = list(self.attrs)
        out.update(self.extra)
        return out

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> ManifestRow:
        """Create from dict (one JSONL line)."""
        missing = [k for k in REQUIRED_KEYS if k not in data]
        if missing:
            raise ManifestError(f"Manifest row missing keys {missing}: {data}")
        attrs = data.get("attrs")
        if attrs is not None and len(attrs) != N_ATTRS:
            raise ManifestError(f"Row '{data['id']}': attrs must have {N_ATTRS} values")
        known = set(REQUIRED_KEYS) | {"gender", "creak_prob", "mean_pitch_hz", "attrs"}
        gender = data.get("gender")
        return cls(
            id=str(data["id"]),
            audio_path=str(data["audio_path"]),
            speaker_id=str(data["speaker_id"]),
            gender=str(gender).lower() if gender is not None else None,
            creak_prob=_opt_float(data.get("creak_prob")),
            mean_pitch_hz=_opt_float(data.get("mean_pitch_hz")),
            attrs=[float(v) for v in attrs] if attrs is not None else None,
            base_dir=base_dir,
            extra={k: v for k, v in data.items() if k not in known},
        )


def _opt_float(value: Any) -> float | None:
    return None if value is None else float(value)


def read_manifest(path: Path | str) -> list[ManifestRow]:
    """Read a JSONL manifest; blank lines are ignored."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ManifestError(f"Cannot read manifest {path}: {e}") from e
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as e:
            raise ManifestError(f"{path}:{lineno}: invalid JSON ({e})") from e
        if not isinstance(data, dict):
            raise ManifestError(f"{path}:{lineno}: expected a JSON object")
        rows.append(ManifestRow.from_dict(data, base_dir=path.parent))
    return rows


def write_jsonl(records: Iterable[dict], path: Path | str) -> None:
    """Write dicts as JSON Lines (single writer, deterministic key order)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for record in records:
            f.write(json.dumps(record) + "\n")


def write_manifest(rows: Iterable[ManifestRow], path: Path | str) -> None:
    write_jsonl((row.to_dict() for row in rows), path)


def has_gender(rows: list[ManifestRow]) -> bool:
    """True if any row carries a gender label."""
    return any(row.gender is not None for row in rows)


# ==========================================================================
# EMBEDDING FILES
# ==========================================================================
#
# JSON Lines with {"id", "speaker_id", "embedding": [...], "attrs": [6 floats]};
# manipulated files add "beta".

@dataclass
class EmbeddingTable:
    ids: list[str]
    speaker_ids: list[str]
    embeddings: np.ndarray
    attrs: np.ndarray
    betas: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def rows(self) -> list[dict]:
        out = []
        for i, (uid, spk) in enumerate(zip(self.ids, self.speaker_ids)):
            row = {
                "id": uid,
                "speaker_id": spk,
                "embedding": [float(v) for v in self.embeddings[i]],
                "attrs": [float(v) for v in self.attrs[i]],
            }
            if self.betas is not None:
                row["beta"] = float(self.betas[i])
            out.append(row)
        return out


def read_embeddings(path: Path | str, require_attrs: bool = True) -> EmbeddingTable:
    """Read an embedding JSONL file; every row must share one dimension."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise ManifestError(f"Cannot read embeddings {path}: {e}") from e
    ids, speakers, embeddings, attrs, betas = [], [], [], [], []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
            uid = str(data["id"])
            embedding = [float(v) for v in data["embedding"]]
            row_attrs = data.get("attrs")
            row_attrs = [float(v) for v in row_attrs] if row_attrs is not None else None
            beta = float(data["beta"]) if data.get("beta") is not None else None
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise ManifestError(f"{path}:{lineno}: invalid embedding row ({e})") from e
        if row_attrs is None and require_attrs:
            raise ManifestError(f"{path}:{lineno}: missing attrs")
        ids.append(uid)
        speakers.append(str(data.get("speaker_id", uid)))
        embeddings.append(embedding)
        attrs.append(row_attrs if row_attrs is not None else [0.0] * N_ATTRS)
        betas.append(beta)
    if not ids:
        raise ManifestError(f"No embeddings in {path}")
    if len({len(e) for e in embeddings}) != 1:
        raise DimensionError(f"{path}: embeddings have mixed dimensions")
    if any(len(a) != N_ATTRS for a in attrs):
        raise DimensionError(f"{path}: attrs must have {N_ATTRS} values")
    has_beta = all(b is not None for b in betas)
    return EmbeddingTable(
        ids=ids,
        speaker_ids=speakers,
        embeddings=np.asarray(embeddings, dtype=np.float64),
        attrs=np.asarray(attrs, dtype=np.float64),
        betas=np.asarray(betas, dtype=np.float64) if has_beta else None,
    )


def write_embeddings(table: EmbeddingTable, path: Path | str) -> None:
    write_jsonl(table.rows(), path)


# ==========================================================================
# CSV TABLES
# ==========================================================================

def read_table(path: Path | str, required: Iterable[str] = ()) -> pd.DataFrame:
    """Read a CSV written by one of the commands, checking required columns."""
    path = Path(path)
    try:
        table = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        table = pd.DataFrame()
    except (OSError, pd.errors.ParserError) as e:
        raise ManifestError(f"Cannot read table {path}: {e}") from e
    missing = [c for c in required if c not in table.columns]
    if missing:
        raise ManifestError(f"{path}: missing columns {', '.join(missing)}")
    return table


def write_table(table: pd.DataFrame, path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False)
