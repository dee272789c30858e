"""Agent roles, tools, prompts and backends."""

from .assessment import SECTIONS, build_assessment
from .backends import (
    AgentBackend,
    BackendError,
    BackendTimeout,
    MalformedResponse,
    RemoteBackend,
    ScriptedBackend,
)
from .messages import (
    EXPLOITIVE,
    EXPLORATORY,
    AgentError,
    ChatMessage,
    FocusArea,
    Reply,
    ScratchPad,
    ToolCall,
    ToolRegistry,
    ToolSpec,
    parse_focus,
    render_focus,
)
from .prompts import PLACEHOLDER, ROLES, load_template, render_system_prompt
from .roles import (
    EpisodeResult,
    PrunePolicy,
    TesterOutcome,
    fallback_focus,
    run_episode,
    run_extractor,
    run_scientist,
    run_tester,
)
from .scripted import FALLBACK_FOCUS, FIRST_ROUND_FOCUS, decide_prunes, extraction_ladder, scripted_backend
from .transcript import Transcript, mutations, read_transcript, replay

__all__ = [
    "SECTIONS", "build_assessment",
    "AgentBackend", "BackendError", "BackendTimeout", "MalformedResponse", "RemoteBackend",
    "ScriptedBackend",
    "EXPLOITIVE", "EXPLORATORY", "AgentError", "ChatMessage", "FocusArea", "Reply", "ScratchPad",
    "ToolCall", "ToolRegistry", "ToolSpec", "parse_focus", "render_focus",
    "PLACEHOLDER", "ROLES", "load_template", "render_system_prompt",
    "EpisodeResult", "PrunePolicy", "TesterOutcome", "fallback_focus", "run_episode",
    "run_extractor", "run_scientist", "run_tester",
    "FALLBACK_FOCUS", "FIRST_ROUND_FOCUS", "decide_prunes", "extraction_ladder", "scripted_backend",
    "Transcript", "mutations", "read_transcript", "replay",
]
