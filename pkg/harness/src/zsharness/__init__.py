"""Execution harness for zero-shot pipeline recommendations.

Three capabilities close the loop around the recommender:

- ``encoder``: turn dataset descriptions into fixed-width vectors in the
  ``ZSEMB`` exchange format the recommender reads.
- ``pipelines``: run a recommended (feature processor, estimator) pair on a
  table with random hyperparameter search and report validation accuracy.
- ``scoring``: score a recommendations file across datasets and emit rows the
  recommender's ``report`` command consumes.

The harness talks to the recommender only through files: ZSEMB embedding
files, recommendation TSVs (``dataset <TAB> feature_processor <TAB>
estimator``), and report rows (``dataset <TAB> accuracy <TAB> time_s``).
"""

from .config import HarnessConfig, HarnessError
from .encoder import embed_texts, write_embedding_file
from .pipelines import PipelineResult, majority_class_accuracy, run_pipeline
from .scoring import score_recommendations

__all__ = [
    "HarnessConfig",
    "HarnessError",
    "PipelineResult",
    "embed_texts",
    "majority_class_accuracy",
    "run_pipeline",
    "score_recommendations",
    "write_embedding_file",
]
