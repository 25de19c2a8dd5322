"""Grid-world behaviour models as explicit MDPs and stochastic games.

Pipeline: parse a scenario and its weighted Q-tables, compile the human
behaviour into an explicit MDP (or a turn-based game against a robot),
verify reachability and expected-reward properties by value iteration, and
synthesise robot policies. See the README for the file formats and the CLI.
"""

from .scenario import (
    Environment,
    Feature,
    FeatureType,
    GoalRegion,
    Objective,
    ObjectiveWeights,
    QTableSet,
    RobotMode,
    RobotSpec,
    ScenarioError,
    ScenarioParseError,
    ScenarioSpec,
    ScenarioValidationError,
    TurnOrder,
    parse_qtables,
    parse_scenario,
    serialize_qtables,
    serialize_scenario,
    validate_environment,
)
from .geometry import (
    HumanPosition,
    Location,
    Movement,
    Orientation,
    Situation,
    direction_vector,
    distance,
    effect,
    is_valid,
    post_position,
    signed_angle,
)
from .behavior import (
    Valuation,
    ValuationEntry,
    closest_relevant,
    combine,
    lookup,
    objective_movement_values,
    relevant_features,
    softmax,
    unique_closest,
)
from .model import (
    Direction,
    MarkovChain,
    Mdp,
    ModelError,
    Player,
    Property,
    PropertyKind,
    Scheduler,
    StateActionReward,
    StateReward,
    StochasticGame,
    TransitionReward,
    export_explicit,
    import_explicit,
    induced_chain,
    rescale_transition_rewards,
    validate_model,
)
from .builder import (
    HumanModelConfig,
    Variant,
    build_human_mdp,
    build_human_mdp_low_confidence,
    build_human_model,
    build_robot_mdp,
    coalition_mdp,
    compose_sg,
    first_time_flags,
    objective_reward,
    resolve_underspecification,
    target_states,
)
from .checker import (
    McEstimate,
    SolverConfig,
    Verdict,
    bounded_reach,
    brute_force_bounded,
    brute_force_expected,
    brute_force_reach,
    brute_force_sg_reach,
    expected_reward,
    monte_carlo,
    reach,
    sg_maxmin_reach,
    sg_value,
    temperature_sweep,
)

__version__ = "0.1.0"
