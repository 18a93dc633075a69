"""Graph condensation toolkit: distill a large node-classification graph
into a small synthetic graph and verify it by training models on it."""

from .condense import (AdjacencyGenerator, CondenseConfig, CondensedGraph,
                       load_condensed, run_condensation, save_condensed)
from .evaluate import (EvalConfig, EvalReport, condensed_stats,
                       cross_architecture_report, train_on_condensed,
                       train_on_original)
from .graph_core import (ClassStats, Dataset, FormatError, NormalizedGraph,
                         PropagationStack, SparseGraph, ValidationError,
                         class_statistics, load_dataset, normalize, propagate,
                         write_dataset_dir)
from .sgc_pretrain import (SgcModel, TeacherCache, TeacherConfig, load_teacher,
                           pretrain, save_teacher)

__version__ = "0.1.0"

__all__ = [
    "AdjacencyGenerator", "ClassStats", "CondenseConfig", "CondensedGraph",
    "Dataset", "EvalConfig", "EvalReport", "FormatError", "NormalizedGraph",
    "PropagationStack", "SgcModel", "SparseGraph", "TeacherCache",
    "TeacherConfig", "ValidationError", "class_statistics", "condensed_stats",
    "cross_architecture_report", "load_condensed", "load_dataset",
    "load_teacher", "normalize", "pretrain", "propagate", "run_condensation",
    "save_condensed", "save_teacher", "train_on_condensed", "train_on_original",
    "write_dataset_dir",
]
