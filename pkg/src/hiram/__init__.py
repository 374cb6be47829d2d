"""HiRAM: type-aware hierarchical relation extraction from distantly supervised bags."""
from .config import PRESETS, TrainConfig, apply_preset
from .corpus import Bag, Corpus, RelationHierarchy, SentenceInstance, Span, derive_hierarchy, load_corpus
from .errors import ContractError, CorpusError, NumericError
from .model import HiRAM
from .synth import SynthSpec, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "Bag", "ContractError", "Corpus", "CorpusError", "HiRAM", "NumericError", "PRESETS",
    "RelationHierarchy", "SentenceInstance", "Span", "SynthSpec", "TrainConfig", "apply_preset",
    "derive_hierarchy", "generate_synthetic", "load_corpus",
]
