"""Chinese-to-English structural priming workbench.

The heavy lifting lives in the compiled extension; this package re-exports
its public surface.
"""

from priming_bench._core import (
    Workbench,
    bleu_difference,
    bleu_score,
    classify_structure,
    generate_corpus,
    generate_test_set,
    normalized_preference,
    tokenize,
)

__all__ = [
    "Workbench",
    "bleu_difference",
    "bleu_score",
    "classify_structure",
    "generate_corpus",
    "generate_test_set",
    "normalized_preference",
    "tokenize",
]

__version__ = "0.1.0"
