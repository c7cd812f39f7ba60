"""Simulation-based evaluation for conversational recommender systems."""

from .agenda import (
    Agenda,
    AgendaBasedSimulator,
    AgentTurnCategory,
    DialogueStateSnapshot,
    InteractionModel,
    InteractionModelConfig,
    OTHER_INTENT,
    TaxonomyError,
    build_interaction_model,
    classify_agent_turn,
    initialize_agenda,
    sample_next_intent,
    update_agenda,
)
from .backend import (
    BackendConfig,
    BackendError,
    BackendKind,
    GenerationRequest,
    GenerationResponse,
    HttpChatBackend,
    MockBackend,
    ScriptExhausted,
    TextBackend,
    backend_from_config,
    load_backend,
    make_mock_backend,
)
from .crs import (
    AgentReply,
    ConnectorError,
    ConnectorKind,
    CrsConnector,
    CrsConnectorConfig,
    CrsSession,
    EmptyReply,
    HttpCrsConnector,
    RuleBasedBehavior,
    RuleBasedCrsConnector,
    ScriptedCrsConnector,
    SessionSummary,
    connector_from_config,
    extract_response_path,
    load_connector_config,
)
from .data_io import (
    CorpusManifest,
    FileUnreadable,
    Item,
    ItemCollection,
    MULTI_VALUE_DELIMITER,
    SchemaMismatch,
    SourceSchemaError,
    annotate_dialogue_acts_llm,
    convert_inspired,
    convert_redial,
    extract_information_need_llm,
    load_corpus,
    load_item_collection,
    save_corpus,
    save_manifest,
)
from .dialogue import (
    Dialogue,
    DialogueAct,
    InvalidAct,
    MalformedActString,
    Participant,
    RESERVED_CHARS,
    Utterance,
    ValidationFinding,
    dialogue_from_obj,
    dialogue_to_obj,
    parse_dialogue_acts,
    render_history_lines,
    serialize_dialogue_acts,
    validate_dialogue,
)
from .errors import ConfigError
from .evaluation import (
    Aspect,
    AspectScore,
    EmptyCorpus,
    EvaluationReport,
    HeuristicSatisfactionScorer,
    LlmJudgeSatisfactionScorer,
    MetricAggregate,
    Rubric,
    RubricAspect,
    evaluate_corpus,
    judge_dialogue,
    load_report,
    metric_avg_turns,
    metric_user_satisfaction,
    render_report_table,
    save_report,
)
from .language import ActStringNlu, LlmNlg, LlmNlu, TemplateNlg, load_template_store
from .llm_sim import (
    DualPromptSimulator,
    PromptSpec,
    SinglePromptSimulator,
    build_generation_prompt,
    build_stopping_prompt,
    load_prompt_spec,
    render_information_need,
)
from .runner import (
    RunConfig,
    TerminationReason,
    cooperative_behavior,
    run_batch,
    run_dialogue,
    seeded_rng,
    stable_hash,
)
from .simulator import SimulatorTurnOutput, TurnKind, UserSimulator
from .user_model import (
    Decision,
    InformationNeed,
    InsufficientProperties,
    ItemAssessment,
    Persona,
    PreferenceModel,
    assess_item,
    generate_information_need,
    init_preference_model,
    need_from_obj,
    need_to_obj,
)

__version__ = "0.1.0"
