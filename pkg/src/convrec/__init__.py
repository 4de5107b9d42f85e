"""Conversational recommendation over faceted catalogs.

Layers, bottom up: a small reverse-mode tensor engine (tensor), faceted
catalogs and synthetic data (catalog, dialoggen), a belief tracker over
utterances (nlu), a factorization-machine recommender (recommender), the
dialogue policy (policy), the simulated-user environment and evaluation
harness (env), and the batch CLI plus HTTP chat service (cli, service).
"""

from .tensor import (
    GradientTape,
    NumericsError,
    OptimizerConfig,
    ShapeError,
    Tensor,
    load_checkpoint,
    optimizer_step,
    save_checkpoint,
)
from .catalog import (
    Catalog,
    CatalogError,
    DatasetSplit,
    FacetSchema,
    Item,
    RatingEvent,
    SyntheticConfig,
    generate_synthetic,
    items_matching,
    load_catalog,
    split,
    write_catalog,
)
from .dialoggen import (
    CorpusConfig,
    Dialogue,
    DialogueAct,
    Turn,
    UtteranceTemplate,
    default_template_pack,
    generate_dialogue_corpus,
    realize,
)
from .nlu import (
    BeliefState,
    DegradedTracker,
    NGramVocabulary,
    OracleTracker,
    TrackerConfig,
    TrackerModel,
    degrade_tracker,
    evaluate_tracker,
    init_tracker,
    load_tracker,
    save_tracker,
    train_tracker,
)
from .recommender import (
    FMConfig,
    FMModel,
    build_features,
    fm_score_batch,
    init_fm,
    load_fm,
    recommend,
    save_fm,
    train_fm,
)
from .policy import (
    Action,
    Episode,
    PolicyConfig,
    PolicyModel,
    init_policy,
    load_policy,
    policy_forward,
    pretrain_policy,
    reinforce_update,
    sample_action,
    save_policy,
)
from .env import (
    EnvComponents,
    Metrics,
    RewardConfig,
    SimulatedUser,
    evaluate,
    generate_episodes,
    make_agent,
    run_episode,
    success_reward,
    sweep,
    train_rl,
)
from .pipeline import RunPaths, StageError
from .service import ChatService, build_service, create_app

__version__ = "0.1.0"
