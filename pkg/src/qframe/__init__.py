"""Query-aware video frame selection and multi-resolution packing.

Given a video and a text query, score uniformly sampled candidate
frames against the query in a shared embedding space, draw a ranked
without-replacement sample via perturbed log-probabilities, assign the
selections to three resolution tiers under an exact token budget, and
emit the frames plus a deterministic manifest.
"""

from .candidates import (
    EmbeddingMatrix,
    QueryEmbedding,
    similarity,
    uniform_candidate_indices,
)
from .core import (
    ScoredCandidates,
    SelectedFrame,
    SelectionConfig,
    SelectionResult,
    Tier,
    ValidatedConfig,
    VideoMeta,
    token_cost,
    validate_config,
)
from .errors import QFrameError
from .pipeline import SelectOutcome, run_embed, run_select
from .providers import (
    EmbeddingCache,
    EmbeddingClient,
    ProviderEndpoint,
    fetch_frame_embeddings,
    fetch_text_embedding,
    load_embedding_file,
    normalize,
    write_embedding_file,
)
from .sampling import (
    PerturbedScores,
    RankedSelection,
    gumbel_noise,
    perturbed_topk,
    select_frames,
    softmax_temperature,
)
from .tiers import (
    BudgetStrategy,
    TierAssignment,
    TierResolutions,
    assign_tiers,
    clamp_to_candidates,
    solve_budget,
    tier_resolution,
    tier_resolutions,
)
from .video import (
    DecodedFrame,
    Manifest,
    decode_frames,
    probe,
    resize_frame,
    write_outputs,
)

__version__ = "0.1.0"

__all__ = [
    "BudgetStrategy",
    "DecodedFrame",
    "EmbeddingCache",
    "EmbeddingClient",
    "EmbeddingMatrix",
    "Manifest",
    "PerturbedScores",
    "ProviderEndpoint",
    "QFrameError",
    "QueryEmbedding",
    "RankedSelection",
    "ScoredCandidates",
    "SelectOutcome",
    "SelectedFrame",
    "SelectionConfig",
    "SelectionResult",
    "Tier",
    "TierAssignment",
    "TierResolutions",
    "ValidatedConfig",
    "VideoMeta",
    "assign_tiers",
    "clamp_to_candidates",
    "decode_frames",
    "fetch_frame_embeddings",
    "fetch_text_embedding",
    "gumbel_noise",
    "load_embedding_file",
    "normalize",
    "perturbed_topk",
    "probe",
    "resize_frame",
    "run_embed",
    "run_select",
    "select_frames",
    "similarity",
    "softmax_temperature",
    "solve_budget",
    "tier_resolution",
    "tier_resolutions",
    "token_cost",
    "uniform_candidate_indices",
    "validate_config",
    "write_embedding_file",
    "write_outputs",
]
