"""Data-centric toolkit for multilingual query relevance.

Corpus handling, translation-based augmentation, semantic hard-negative
mining, self-validation filtering, two-token probability scoring, threshold
calibration, and F1 reporting, with all model access behind pluggable
providers (deterministic mocks or HTTP services).
"""

from .corpus import Origin, RelevanceRecord, Task, load_corpus, save_corpus
from .errors import ConfigError, DataError, ProviderError, RelDataError
from .evalreport import average_f1, build_report, f1_positive
from .providers import MockEmbedder, MockScorer, MockTranslator, ProviderSettings
from .scoring import calibrate_threshold, decide, normalize_yes

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "MockEmbedder",
    "MockScorer",
    "MockTranslator",
    "Origin",
    "ProviderError",
    "ProviderSettings",
    "RelDataError",
    "RelevanceRecord",
    "Task",
    "average_f1",
    "build_report",
    "calibrate_threshold",
    "decide",
    "f1_positive",
    "load_corpus",
    "normalize_yes",
    "save_corpus",
    "__version__",
]
