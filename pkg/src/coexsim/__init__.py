"""Seeded simulator of repetition-based grant-free IoT uplink access
coexisting with a broadband user under orthogonal slicing or full-band
sharing, plus decentralized tabular (double) Q-learning of the IoT
repetition policy against a latency deadline."""

from .scenario import (
    SystemParams, BandPlan, Deployment, Scenario, ScenarioError,
    table1_params, slicing_plan, sharing_plan, validate, sample_deployment,
    load_config, parse_config, dump_config,
    MODE_SLICING, MODE_SHARING,
)
from .env import (
    AgentState, Environment, EnvError, FrameResult, BroadbandBlockState,
    broadband_progress, reset,
)
from .agents import (
    reward, QTable, QTablePair, Transition, ql_update, doql_update,
    softmax_select, softmax_probs, extract_policy, value_iteration,
    build_single_user_model, single_user_success_prob, vi_initialize,
    DegreeDistribution, IRSA_DISTRIBUTION, irsa_action,
)
from .metrics import (
    LatencySample, RunArtifacts, latency_cdf, throughput,
    energy_efficiency, avg_reward_per_packet,
)
from .runner import ExperimentSpec, run, run_many, sweep_b2, sweep_deadline

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
