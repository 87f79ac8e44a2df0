"""Exception hierarchy.

The CLI maps `InputError`/`AudioIOError` to exit code 2 and `NumericalError`
to exit code 3.
"""


class CreakbenchError(Exception):
    """Base class for every error raised by creakbench."""


# --- Input errors (exit 2) ---

class InputError(CreakbenchError, ValueError):
    """Invalid user input: files, manifests, parameters."""


class AudioFormatError(InputError):
    """WAV header could not be parsed."""


class UnsupportedAudioError(InputError):
    """WAV parsed but the sample encoding is not PCM16/float32."""


class AudioIOError(CreakbenchError, OSError):
    """Audio file could not be read or written."""


class NoSpeechError(InputError):
    """VAD found no speech in the clip."""

    def __init__(self, message: str = "no speech detected"):
        super().__init__(message)


class UnvoicedError(InputError):
    """No voiced frames where at least one is required."""

    def __init__(self, message: str = "unvoiced utterance"):
        super().__init__(message)


class DegenerateSeriesError(InputError):
    """Series with (near) zero variance."""

    def __init__(self, message: str = "degenerate series"):
        super().__init__(message)


class CalibrationError(InputError):
    """Calibration file unreadable or labels degenerate."""


class ManifestError(InputError):
    """Manifest missing, unreadable or lacking required keys."""


class ModelFormatError(InputError):
    """Flow model file corrupt or of an unknown version."""


class DimensionError(InputError):
    """Embedding/attribute dimensions disagree with the model."""


class ConfigError(InputError):
    """Configuration file unreadable."""


class TrialError(InputError):
    """Verification trial set cannot be scored."""


# --- Numerical failures (exit 3) ---

class NumericalError(CreakbenchError):
    """Numerical failure during integration or training."""


class FlowDivergenceError(NumericalError):
    """ODE state became non-finite."""


class FlowTrainingError(NumericalError):
    """Training objective became non-finite."""
