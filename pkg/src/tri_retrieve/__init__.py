"""Tri-modal text retrieval: dense, learned-sparse and multi-vector
scoring over one shared candidate space, with fused reranking, a
self-distilling loss stack, length-grouped batching, and a seeded toy
encoder that makes every pipeline stage runnable and testable without
model weights.
"""

from .core import (
    DenseEmbedding,
    FusionWeights,
    MultiVectorEmbedding,
    ScoredHit,
    TermWeightVector,
    dot,
    normalize,
    ranked_hits,
)
from .errors import (
    DegenerateVector,
    DimensionMismatch,
    DuplicateDoc,
    EmptyInput,
    InvalidPlan,
    InvalidSpec,
    InvalidTemperature,
    LengthOutOfRange,
    MissingRepresentation,
    NonFinite,
    ParseError,
    TriRetrieveError,
    UnknownDoc,
)
from .scoring import s_dense, s_lex, s_mul, weighted_score
from .toy_encoder import (
    DEFAULT_MCLS_INTERVAL,
    EncodedText,
    ToyEncoderParams,
    encode,
    encode_mcls,
    read_token_file,
    token_vector,
    write_token_file,
)
from .dense_index import DenseIndex, build_dense, load_dense, save_dense, search_dense
from .sparse_index import (
    SparseIndex,
    bm25_score,
    build_sparse,
    load_sparse,
    rank_bm25,
    save_sparse,
    search_sparse,
)
from .multivec import MultiVecStore, add_doc, rerank
from .pipeline import (
    PRESETS,
    EmbeddingRecord,
    HybridConfig,
    ingest_embeddings,
    mine_hard_negatives,
    read_embeddings,
    retrieve_hybrid,
    write_embeddings,
)
from .distill import (
    DEFAULT_LOSS_WEIGHTS,
    DEFAULT_TEMPERATURE,
    CandidateScores,
    GradientSet,
    LossBreakdown,
    LossWeights,
    compute_losses,
    finite_difference_check,
    info_nce,
    integrate,
    loss_gradients,
    soft_cross_entropy,
)
from .batching import (
    BatchPlan,
    LengthGroupTable,
    PaddingStats,
    assign_groups,
    default_table,
    encode_with_split,
    gather_all,
    negative_pool,
    padding_stats,
    plan_epoch,
    random_plan_like,
    split_batch,
)
from .evalkit import (
    MetricResult,
    ndcg_at_k,
    read_qrels,
    read_run,
    recall_at_k,
    write_qrels,
    write_run,
)
from .corpusgen import SynthSpec, generate

__version__ = "0.1.0"
