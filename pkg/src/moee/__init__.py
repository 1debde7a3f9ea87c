"""Toolkit for turning MoE router activations into embeddings and
evaluating them with MTEB-style metrics and agreement statistics."""

from .engine import (
    MoEConfig,
    MoEModel,
    ForwardTrace,
    forward,
    gen_toy_model,
    gate_softmax,
    load_model,
    save_model,
    tokenize,
    detokenize,
)
from .store import (
    ActivationBundle,
    BundleContainer,
    bundle_from_trace,
    read_container,
    validate_container,
    write_container,
)
from .embedder import (
    EmbeddingVector,
    HsStrategy,
    PromptTemplate,
    RouterEmbedder,
    apply_prompt,
    extract,
    extract_hs,
    extract_rw,
    moee_concat,
)
from .simkit import SimilaritySpec, cosine, moee_sum_similarity, similarity_matrix
from .metrics import (
    GradientLogisticClassifier,
    Partition,
    SeededKMeans,
    accuracy,
    ami,
    average_precision,
    exact_match,
    jaccard_pairs,
    kmeans,
    mean_average_precision,
    ndcg_at_k,
    nmi,
    spearman,
    v_measure,
)
from .harness import TaskDataset, TaskScore, load_dataset, run_task, sweep
from .analysis import (
    AgreementReport,
    ComplementarityReport,
    cluster_agreement,
    complementarity_errors,
    prompt_correlation_matrix,
    prompt_robustness,
)

__version__ = "0.1.0"
