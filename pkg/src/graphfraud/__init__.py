"""Multi-relation graph fraud detection with semantic type- and relation-level
enhancement from pluggable text-embedding providers."""

__version__ = "0.1.0"

from .enhancer import (
    CacheOnlyProvider,
    EmbeddingCache,
    EmbeddingRecord,
    EmbeddingSet,
    Prompt,
    PseudoEmbeddingProvider,
    RemoteEmbeddingProvider,
    build_prompts,
    build_relation_prompt,
    build_type_prompt,
    collect_embeddings,
    fetch_embedding,
    pseudo_embed,
)
from .errors import (
    CacheIntegrityError,
    DimensionError,
    GraphFraudError,
    LoadError,
    NumericError,
    ProviderError,
    ValidationError,
)
from .graph import (
    MultiRelationGraph,
    RelationAdjacency,
    SplitAssignment,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    make_split,
    read_meta,
    save_dataset,
)
from .metrics import EvalReport, ScoredLabels, aucprc, aucroc, f1_macro
from .model import (
    ForwardTrace,
    FraudDetector,
    ModelConfig,
    backbone_aggregate,
    classify,
    dump_fused_representations,
    feature_map,
    fuse,
    init_parameters,
    project_enhancer_embeddings,
    relation_enhance,
    type_enhance,
)
from .numerics import (
    AdamConfig,
    GradientCheckReport,
    ParameterStore,
    adam_step,
    cross_entropy_loss,
    gradient_check,
    leaky_relu,
    linear_forward,
    sigmoid,
    softmax_rows,
)
from .training import (
    AggregateReport,
    RunRecord,
    TrainConfig,
    aggregate_metrics,
    evaluate,
    run_experiment,
    train,
)
