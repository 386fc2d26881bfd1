"""Generative picture-book engine for family food-trying routines."""

__version__ = "0.1.0"

from .domain import (  # noqa: F401
    BasicConstraints,
    ChildAvatar,
    Episode,
    EpisodeKind,
    FeedbackMessage,
    PostMealRecord,
    RecapAndGoal,
    StoryFramework,
    canonical_parse,
    canonical_serialize,
)
from .validation import (  # noqa: F401
    ValidationReport,
    ViolationCode,
    count_han_chars,
    validate_episode,
    validate_feedback_text,
    validate_framework,
    validate_page_graph,
)
