"""Version-aware incremental code coverage for a deterministic mini-language."""

from .changedet import (
    DIGEST_ALGORITHM,
    UnitDigest,
    compute_changeset,
    diff_digests,
    normalized_encoding,
    snapshot_digests,
    unit_digest,
)
from .harness import (
    CoverageDiff,
    HistoryParams,
    ParamError,
    ReplayResult,
    ReplayRow,
    RunResult,
    analyze_against_store,
    generate_history,
    load_history,
    replay,
    replay_csv,
    run_full,
    run_incremental,
    verify_equivalence,
    write_history,
)
from .merge import DeltaMismatch, merge_coverage, merge_dependency_graph
from .miniproj import (
    ExecutionResult,
    LinkError,
    MAX_CALL_DEPTH,
    ParseError,
    UnknownTest,
    execute_tests,
    load_project,
    parse_project,
    render_project,
)
from .model import (
    Branch,
    Call,
    ChangeSet,
    CoverageData,
    DependencyGraph,
    Function,
    Line,
    MAX_BRANCH_DEPTH,
    ProbeId,
    Return,
    SelectionResult,
    Snapshot,
    Statement,
    Unit,
    unit_layout,
    validate_snapshot,
)
from .report import CoverageReport, StaleProbe, UnitCounters, compute_report, render_report
from .selection import (
    SnapshotInvalid,
    affected_units,
    analyze,
    compose_selection,
    expand_selection,
    first_version_selection,
    select_rts,
    selection_to_json,
)
from .store import (
    CorruptStore,
    IncompatibleStore,
    StoreState,
    load_state,
    parse_state,
    render_state,
    save_state,
)

__version__ = "0.1.0"
