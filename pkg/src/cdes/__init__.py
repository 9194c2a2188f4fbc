"""Sense-specific static embeddings distilled from contextualized embeddings.

The toolkit learns per-sense diagonal projections of static word vectors by
aligning them with filtered contextualized vectors, assembles composite
sense banks (projected static + gloss + corpus segments), and evaluates
them on word sense disambiguation and word-in-context discrimination.
"""

from .backend import active_backend, set_backend
from .bank import (
    ClusterAssignment,
    SenseBank,
    assemble_bank,
    corpus_segments,
    extract_collocation_contexts,
    gloss_segment,
    kmeans,
    load_bank,
    save_bank,
    sentence_embedding,
)
from .errors import CdesError, FormatError, TrainingError, ValidationError
from .projection import (
    Activation,
    InitScheme,
    ProjectionModel,
    TrainConfig,
    TrainReport,
    forward,
    gradients,
    init_model,
    load_model,
    loss,
    project_sense,
    save_model,
    train,
)
from .seeding import derive_seed
from .store import (
    CollocationSet,
    ContextRecord,
    SenseInventory,
    StaticTable,
    load_collocations,
    load_context_dump,
    load_gold_keys,
    load_sense_inventory,
    load_static_table,
    save_context_dump,
    save_sense_inventory,
    validate_records,
)
from .wic import (
    LogisticModel,
    WicPair,
    evaluate_wic,
    train_logistic,
    wic_accuracy,
    wic_features,
)
from .wsd import (
    EvalReport,
    Prediction,
    WsdInstance,
    cosine,
    disambiguate,
    evaluate_wsd,
    neighbors,
    query_vector,
    score_wsd,
)

__version__ = "0.1.0"
