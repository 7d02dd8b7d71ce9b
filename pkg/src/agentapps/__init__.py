"""Runtime for generated, stateful, evolvable agentic applications."""

from .state import (
    AppState,
    AffordanceSet,
    AgentContext,
    AnticipatoryAffordance,
    ContextUpdate,
    Delta,
    EnvironmentRecordRef,
    Event,
    InsertChild,
    NewAppRequest,
    RemoveNode,
    RetrievedRecord,
    SetProps,
    StructuredAffordance,
    TextReply,
    TransitionResult,
    ViewNode,
    apply_delta,
    diff_view,
    empty_state,
    validate_state,
)
from .environment import MockEnvironment, QuerySpec
from .intent import IntentAnalyzer, IntentAssessment, InterpretedEvent
from .agent import (
    AgentScript,
    GenerationPlan,
    RenderRequest,
    ScriptedAgent,
    assess_compatibility,
    make_plan,
    select_strategy,
)
from .qa import QaConfig, QaReport, gate
from .store import (
    AppStore,
    AppTemplate,
    SharePackage,
    StateHistory,
    export_share,
    extract_template,
    import_share,
    instantiate_template,
    refresh_data,
)
from .service import Outcome, SessionService, WireServer

__version__ = "0.1.0"

__all__ = [
    "AppState", "AffordanceSet", "AgentContext", "AnticipatoryAffordance",
    "ContextUpdate", "Delta", "EnvironmentRecordRef", "Event", "InsertChild",
    "NewAppRequest", "RemoveNode", "RetrievedRecord", "SetProps",
    "StructuredAffordance", "TextReply", "TransitionResult", "ViewNode",
    "apply_delta", "diff_view", "empty_state", "validate_state",
    "MockEnvironment", "QuerySpec",
    "IntentAnalyzer", "IntentAssessment", "InterpretedEvent",
    "AgentScript", "GenerationPlan", "RenderRequest", "ScriptedAgent",
    "assess_compatibility", "make_plan", "select_strategy",
    "QaConfig", "QaReport", "gate",
    "AppStore", "AppTemplate", "SharePackage", "StateHistory",
    "export_share", "extract_template", "import_share",
    "instantiate_template", "refresh_data",
    "Outcome", "SessionService", "WireServer",
    "__version__",
]
