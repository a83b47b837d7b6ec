"""Divide-and-Fuse re-ranking for person re-identification and instance retrieval."""

from .core import (
    DistanceField,
    InvalidParameterError,
    RankTable,
    ReRankParams,
    build_rank_tables,
    compute_initial_distances,
    split_features,
)
from .encoding import contextual_similarity, encode_vector, neighbor_enhance
from .fusion import InvertedIndex, batch_jaccard, build_inverted_index, fuse, jaccard_distance
from .pipeline import DaFReRanker, RankingResult, initial_ranking, iterate_subfeature, rerank

__version__ = "0.1.0"
