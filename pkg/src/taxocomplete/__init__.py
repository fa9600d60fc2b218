"""Taxonomy-aware multi-label completion.

Label taxonomies are handled as posets with a single most general label.
The package splits them into overlapping tasks (one per child of the
root), trains a shared transformer with a small generator per task to
extend label paths, and decodes with taxonomy-constrained beam search.
"""
from .data import Document, RunConfig, load_config, load_corpus, load_embeddings, tokenize
from .decode import BeamConfig, ScoredPath, aggregate, beam_extend, rank
from .errors import TaxoCompleteError
from .loss import LossConfig, tat_loss
from .metrics import EvalSample, evaluate_corpus, ndcg_at_k, precision_at_k
from .model import ModelConfig, ModelParameters, forward, init_parameters
from .paths import expand_label_set, inference_prefixes, paths_from_label_set
from .tasks import TaskSet, TatDecomposition, decompose, relevant_tasks, verify_tat
from .taxonomy import Taxonomy, load_taxonomy, read_taxonomy

__version__ = "0.1.0"

__all__ = [
    "BeamConfig",
    "Document",
    "EvalSample",
    "LossConfig",
    "ModelConfig",
    "ModelParameters",
    "RunConfig",
    "ScoredPath",
    "TaskSet",
    "TatDecomposition",
    "Taxonomy",
    "TaxoCompleteError",
    "aggregate",
    "beam_extend",
    "decompose",
    "evaluate_corpus",
    "expand_label_set",
    "forward",
    "inference_prefixes",
    "init_parameters",
    "load_config",
    "load_corpus",
    "load_embeddings",
    "load_taxonomy",
    "ndcg_at_k",
    "paths_from_label_set",
    "precision_at_k",
    "rank",
    "read_taxonomy",
    "relevant_tasks",
    "tat_loss",
    "tokenize",
    "verify_tat",
]
