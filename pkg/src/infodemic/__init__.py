"""Joint rumor detection, virality prediction and user vulnerability estimation on propagation graphs."""

__version__ = "0.1.0"

from .data import (  # noqa: E402
    CLASSES,
    NON_RUMOR,
    RUMOR,
    CorpusSplits,
    LabelSet,
    ObservedEvent,
    Post,
    PropagationEvent,
    UserInteractionGraph,
    build_user_graph,
    corpus_stats,
    derive_labels,
    observe_prefix,
    parse_event,
    split_corpus,
)
from .model import ModelConfig, MultiTaskModel, init_model  # noqa: E402
from .trainer import TrainConfig, Trainer, train  # noqa: E402
