"""Two-sided fair division of many-to-many matchings.

Construct degree-constrained matchings that are fair to both sides of a
market, check envy- and share-based fairness exactly, and verify existence
and impossibility claims by exhaustive search.
"""

from .errors import (
    BadParameter,
    BudgetExceeded,
    DegreeExceedsSide,
    DimensionMismatch,
    FairmatchError,
    NegativeValue,
    NotCoprime,
    SchemaError,
    SizeMismatch,
)
from .fairness import (
    EnvyWitness,
    FairnessReport,
    dmms_alpha,
    ef_c_check,
    fairness_report,
    mms_value,
    mms_values,
    report_to_json,
    sd_ef_c_check,
    unconstrained_mms_value,
    utilities,
    verify_witness,
    weak_mms_value,
)
from .instances import (
    Instance,
    InstanceGenConfig,
    Matching,
    MatchingStatus,
    PreferenceProfile,
    derive_ordinal,
    generate_instance,
    make_instance,
    matching_status,
    parse_instance,
    parse_matching,
    serialize_instance,
    serialize_matching,
    validate_instance,
)
from .matchers import (
    RoundRobinOrdering,
    classic_round_robin,
    d2_dmms_def1,
    general_sd_def1,
    restricted_rr,
    restricted_rr_coprime,
    round_robin_ordering,
    three_phase_rr,
    weak_mms_matching,
)
from .search import (
    AlphaResult,
    SearchOutcome,
    SearchSpec,
    SearchStatus,
    enumerate_complete_matchings,
    find_matching,
    max_dmms_alpha,
)

__version__ = "0.1.0"
