"""Experiment orchestration: train/evaluate pipelines, replication
management, seeding, and artifact persistence.

Seeding: the deployment for replication r is derived from
(base_seed, "deployment", r) only, so every scheme faces the same set of
deployments and schemes can be compared pairwise. Simulation streams add
the scheme tag and phase, keeping training and inference independent.
"""

import json
import hashlib
import multiprocessing
import random
import warnings
from dataclasses import dataclass, replace
from functools import partial
from pathlib import Path

from . import agents, metrics
from . import scenario as scenario_mod
from .env import Environment

SCHEMES = ("VI", "QL", "QLPlusVI", "DoQL", "DoQLPlusVI", "IRSA")
LEARNING_SCHEMES = ("QL", "QLPlusVI", "DoQL", "DoQLPlusVI")
STATIC_SCHEMES = ("VI", "IRSA")


class RunnerError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: scenario_mod.Scenario
    scheme: str
    training_frames: int = 5000
    inference_frames: int = 100000
    replications: int = 100
    base_seed: int = 1
    reward_window: int = 100
    learning_rate: float = 0.1
    lr_power: float | None = 0.8
    discount: float = 0.95
    tau_start: float = 1.0
    tau_end: float = 0.05
    anneal_frames: int | None = 2500   # None: anneal over training_frames
    doql_rule: str = "as_printed"
    count_all_replicas: bool = False
    irsa_placement: str = "random"
    workers: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise RunnerError(f"unknown scheme {self.scheme!r}")
        if self.replications < 1:
            raise RunnerError("replications must be >= 1")
        if self.training_frames < 0 or self.inference_frames < 0:
            raise RunnerError("frame counts must be nonnegative")


def derive_seed(*parts):
    """Stable 64-bit seed from arbitrary labels."""
    text = "/".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def temperature_schedule(frame, tau_start, tau_end, anneal_frames):
    """Geometric anneal from tau_start to tau_end, then held."""
    if anneal_frames <= 0:
        return tau_end
    progress = min(frame, anneal_frames) / anneal_frames
    return tau_start * (tau_end / tau_start) ** progress


def _build_tables(spec, models):
    params = spec.scenario.params
    tables = []
    for j in range(params.num_iot):
        if spec.scheme in ("DoQL", "DoQLPlusVI"):
            table = agents.QTablePair(
                n_actions=params.frame_length,
                learning_rate=spec.learning_rate,
                discount=spec.discount,
                update_rule=spec.doql_rule,
                lr_power=spec.lr_power,
            )
        else:
            table = agents.QTable(
                n_actions=params.frame_length,
                learning_rate=spec.learning_rate,
                discount=spec.discount,
                lr_power=spec.lr_power,
            )
        if spec.scheme in ("QLPlusVI", "DoQLPlusVI"):
            agents.vi_initialize(table, models[j], discount=spec.discount)
        tables.append(table)
    return tables


def _train(spec, deployment, tables, rep):
    """Softmax exploration with per-frame annealed temperature; returns the
    (frame, terminal reward) events of the training phase."""
    # all simulation streams are scheme-independent so paired schemes face
    # identical deployments, arrivals, fading, and exploration draws for as
    # long as their action sequences coincide (common random numbers); the
    # double-Q table coin draws from its own stream to keep the shared
    # exploration sequence aligned across schemes
    env = Environment(
        spec.scenario, deployment,
        random.Random(derive_seed(spec.base_seed, "train-env", rep)),
        count_all_replicas=spec.count_all_replicas,
        arrival_rng=random.Random(derive_seed(spec.base_seed,
                                              "train-arrivals", rep)))
    agent_rng = random.Random(derive_seed(spec.base_seed,
                                          "train-agent", rep))
    coin_rng = random.Random(derive_seed(spec.base_seed,
                                         "train-coin", rep))
    anneal = spec.anneal_frames if spec.anneal_frames is not None \
        else spec.training_frames
    num_iot = spec.scenario.params.num_iot
    events = []
    for frame in range(spec.training_frames):
        tau = temperature_schedule(frame, spec.tau_start, spec.tau_end,
                                   anneal)
        actions = [0] * num_iot
        decisions = []
        for j in range(num_iot):
            if env.has_packet(j):
                state = env.decision_state(j)
                action = agents.softmax_select(tables[j], state, agent_rng,
                                               temperature=tau)
                actions[j] = action
                decisions.append((j, state, action))
        result = env.step_frame(actions)
        for j, state, action in decisions:
            out = result.outcomes[j]
            value = agents.reward_of_state(out.state)
            transition = agents.Transition(state, action, out.state, value,
                                           out.terminal)
            if isinstance(tables[j], agents.QTablePair):
                agents.doql_update(tables[j], transition, coin_rng)
            else:
                agents.ql_update(tables[j], transition)
            if out.terminal:
                events.append((frame, value))
    return events


def _inference(spec, deployment, policies, rep, artifacts):
    env = Environment(
        spec.scenario, deployment,
        random.Random(derive_seed(spec.base_seed, "infer-env", rep)),
        count_all_replicas=spec.count_all_replicas,
        arrival_rng=random.Random(derive_seed(spec.base_seed,
                                              "infer-arrivals", rep)))
    policy_rng = random.Random(derive_seed(spec.base_seed,
                                           "infer-policy", rep))
    params = spec.scenario.params
    num_iot = params.num_iot
    uplink = params.frame_length - 1
    slot_ms = params.slot_duration * 1e3
    irsa = spec.scheme == "IRSA"
    for frame in range(spec.inference_frames):
        actions = [0] * num_iot
        for j in range(num_iot):
            if env.has_packet(j):
                if irsa:
                    actions[j] = agents.irsa_action(
                        agents.IRSA_DISTRIBUTION, policy_rng, uplink,
                        spec.irsa_placement)
                else:
                    actions[j] = agents.policy_action(
                        policies[j], env.decision_state(j))
        result = env.step_frame(actions)
        for j, out in enumerate(result.outcomes):
            if out.terminal:
                value = agents.reward_of_state(out.state)
                artifacts.inference_reward_events.append((frame, value))
                if out.delivered:
                    artifacts.latency_samples.append(metrics.LatencySample(
                        j, out.latency * slot_ms, "delivered"))
                else:
                    artifacts.latency_samples.append(metrics.LatencySample(
                        j, out.state.latency * slot_ms, "dropped"))
    artifacts.f_samples = list(env.block.f_samples)
    artifacts.accepted = env.accepted
    artifacts.delivered = env.delivered
    artifacts.dropped = env.dropped
    artifacts.discarded = env.discarded
    artifacts.in_flight = env.in_flight()
    return env


def run_replication(spec, rep, checkpoint_path=None):
    scn = spec.scenario
    params = scn.params
    dep_seed = derive_seed(spec.base_seed, "deployment", rep)
    deployment = scenario_mod.sample_deployment(
        scn, random.Random(dep_seed), seed=dep_seed)

    probe = Environment(scn, deployment, random.Random(0))
    artifacts = metrics.RunArtifacts(
        scheme=spec.scheme,
        mode=scn.plan.mode,
        replication=rep,
        deployment_seed=dep_seed,
        broadband_rate=probe.broadband_rate,
        broadband_tx_power=probe.broadband_tx_power,
        block_len=params.broadband_block_len,
        frame_length=params.frame_length,
    )

    needs_model = spec.scheme in ("VI", "QLPlusVI", "DoQLPlusVI")
    models = None
    if needs_model:
        models = [agents.build_single_user_model(
            scn, agents.single_user_success_prob(scn, d),
            count_all_replicas=spec.count_all_replicas)
            for d in deployment.iot_distances]

    if spec.scheme in STATIC_SCHEMES and spec.training_frames > 0:
        warnings.warn(f"scheme {spec.scheme} has no training phase; "
                      f"training_frames ignored", stacklevel=2)

    tables = None
    policies = None
    if spec.scheme in LEARNING_SCHEMES:
        tables = _build_tables(spec, models)
        if spec.training_frames > 0:
            artifacts.training_reward_events = _train(
                spec, deployment, tables, rep)
        policies = [agents.extract_policy(t) for t in tables]
        fingerprints = [agents.table_fingerprint(t) for t in tables]
    elif spec.scheme == "VI":
        policies = []
        for model in models:
            _, policy = agents.value_iteration(model,
                                               discount=spec.discount)
            policies.append(policy)

    _inference(spec, deployment, policies, rep, artifacts)

    if tables is not None:
        after = [agents.table_fingerprint(t) for t in tables]
        if after != fingerprints:
            raise RunnerError("tables changed during inference")
        if checkpoint_path is not None:
            # one file per user keeps checkpoints resumable
            base = Path(checkpoint_path)
            for j, table in enumerate(tables):
                agents.save_tables(
                    base.with_name(base.stem + f"_user{j}.csv"), table)

    artifacts.finalize()
    artifacts.check_consistency()
    return artifacts


def _run_replications(spec, checkpoint_dir=None):
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
    reps = list(range(spec.replications))
    if spec.workers > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(spec.workers) as pool:
            return pool.map(
                partial(_replication_task, spec,
                        str(checkpoint_dir) if checkpoint_dir else None),
                reps)
    return [_replication_task(
        spec, str(checkpoint_dir) if checkpoint_dir else None, r)
        for r in reps]


def _replication_task(spec, checkpoint_dir, rep):
    path = None
    if checkpoint_dir is not None:
        path = Path(checkpoint_dir) / f"{spec.scheme}_rep{rep:03d}.csv"
    return run_replication(spec, rep, path)


def run(spec, outdir=None):
    """All replications of one scheme; returns the per-replication
    artifacts in replication order."""
    checkpoint_dir = None
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        if spec.scheme in LEARNING_SCHEMES:
            checkpoint_dir = outdir / "qtables"
    results = _run_replications(spec, checkpoint_dir)
    if outdir is not None:
        write_run_tables(outdir, spec, {spec.scheme: results})
    return results


def run_many(spec, schemes, outdir=None):
    """Run several schemes against the same deployments (shared base seed)
    and write combined tables."""
    results = {}
    for scheme in schemes:
        sub = replace(spec, scheme=scheme)
        checkpoint_dir = None
        if outdir is not None and scheme in LEARNING_SCHEMES:
            checkpoint_dir = Path(outdir) / "qtables"
        results[scheme] = _run_replications(sub, checkpoint_dir)
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        write_run_tables(outdir, spec, results)
    return results


# ---------------------------------------------------------------------------
# aggregation + persistence
# ---------------------------------------------------------------------------

def pooled_latency_rows(scheme, mode, artifact_list, grid_ms):
    samples = []
    for artifact in artifact_list:
        samples.extend(artifact.latency_samples)
    if not samples:
        return []
    cdf = metrics.latency_cdf(samples, grid_ms)
    return [(scheme, mode, x, y) for x, y in cdf]


def averaged_training_rows(scheme, mode, artifact_list, window):
    per_rep = [dict(metrics.avg_reward_per_packet(a.training_reward_events,
                                                  window))
               for a in artifact_list if a.training_reward_events]
    starts = sorted({s for series in per_rep for s in series})
    rows = []
    for start in starts:
        values = [series[start] for series in per_rep if start in series]
        rows.append((scheme, mode, start, sum(values) / len(values)))
    return rows


def reward_statistics(artifact_list):
    means = [a.mean_inference_reward() for a in artifact_list
             if a.mean_inference_reward() is not None]
    if not means:
        return None, None, 0
    n = len(means)
    mean = sum(means) / n
    var = sum((m - mean) ** 2 for m in means) / n
    return mean, var ** 0.5, n


def aggregate_broadband(artifact_list):
    thr = [a.throughput_bps for a in artifact_list
           if a.throughput_bps is not None]
    ee = [a.energy_efficiency_bpj for a in artifact_list
          if a.energy_efficiency_bpj is not None]
    mean_thr = sum(thr) / len(thr) if thr else None
    mean_ee = sum(ee) / len(ee) if ee else None
    return mean_thr, mean_ee


def default_latency_grid(scenario):
    params = scenario.params
    slot_ms = params.slot_duration * 1e3
    return [i * slot_ms for i in range(1, params.latency_deadline + 1)]


def write_run_tables(outdir, spec, results_by_scheme):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    scn = spec.scenario
    grid = default_latency_grid(scn)

    latency_rows = []
    training_rows = []
    inference_rows = []
    summary = {"base_seed": spec.base_seed, "mode": scn.plan.mode,
               "schemes": {}}
    for scheme in sorted(results_by_scheme):
        artifact_list = results_by_scheme[scheme]
        mode = scn.plan.mode
        latency_rows.extend(
            pooled_latency_rows(scheme, mode, artifact_list, grid))
        training_rows.extend(
            averaged_training_rows(scheme, mode, artifact_list,
                                   spec.reward_window))
        mean, std, n = reward_statistics(artifact_list)
        if mean is not None:
            inference_rows.append((scheme, mode, mean, std, n))
        mean_thr, mean_ee = aggregate_broadband(artifact_list)
        summary["schemes"][scheme] = {
            "replications": len(artifact_list),
            "mean_inference_reward": mean,
            "std_inference_reward": std,
            "mean_throughput_bps": mean_thr,
            "mean_energy_efficiency_bpj": mean_ee,
            "per_replication": [
                {
                    "replication": a.replication,
                    "deployment_seed": a.deployment_seed,
                    "broadband_rate": a.broadband_rate,
                    "broadband_tx_power": a.broadband_tx_power,
                    "mean_inference_reward": a.mean_inference_reward(),
                    "throughput_bps": a.throughput_bps,
                    "energy_efficiency_bpj": a.energy_efficiency_bpj,
                    "accepted": a.accepted,
                    "delivered": a.delivered,
                    "dropped": a.dropped,
                    "discarded": a.discarded,
                } for a in artifact_list
            ],
        }

    metrics.write_table(outdir / "latency_cdf.csv", "latency_cdf",
                        latency_rows)
    if training_rows:
        metrics.write_table(outdir / "training_rewards.csv",
                            "training_rewards", training_rows)
    metrics.write_table(outdir / "inference_rewards.csv",
                        "inference_rewards", inference_rows)
    (outdir / "config_echo.ini").write_text(
        scenario_mod.dump_config(scn) + _spec_echo(spec), encoding="utf-8")
    (outdir / "summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n",
        encoding="utf-8")


def _spec_echo(spec):
    lines = ["[experiment]"]
    for name in ("scheme", "training_frames", "inference_frames",
                 "replications", "base_seed", "reward_window",
                 "learning_rate", "lr_power", "discount", "tau_start",
                 "tau_end", "anneal_frames", "doql_rule",
                 "count_all_replicas", "irsa_placement", "workers"):
        lines.append(f"{name} = {getattr(spec, name)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def sweep_b2(spec, fractions, schemes=None, outdir=None):
    """One full run per IoT bandwidth fraction (slicing); emits the
    operating-point rows (reward vs throughput/EE) per scheme."""
    if not fractions:
        raise RunnerError("empty sweep axis")
    for fraction in fractions:
        if not 0.0 < fraction < 1.0:
            raise RunnerError(f"b2 fraction {fraction} outside (0, 1)")
    schemes = schemes or [spec.scheme]
    rows = []
    for fraction in fractions:
        scn = scenario_mod.with_b2_fraction(spec.scenario, fraction)
        for scheme in schemes:
            sub = replace(spec, scenario=scn, scheme=scheme)
            artifact_list = run(sub)
            mean, _, _ = reward_statistics(artifact_list)
            mean_thr, mean_ee = aggregate_broadband(artifact_list)
            rows.append((scheme, scn.plan.mode, fraction, mean,
                         mean_thr, mean_ee))
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        metrics.write_table(outdir / "tradeoff.csv", "tradeoff", rows)
    return rows


def sharing_operating_point(spec, schemes=None, outdir=None):
    """Single tradeoff row per scheme under full-band sharing."""
    schemes = schemes or [spec.scheme]
    scn = spec.scenario
    if scn.plan.mode != scenario_mod.MODE_SHARING:
        scn = scenario_mod.validate(
            scn.params,
            scenario_mod.sharing_plan(scn.params.bandwidth_total))
    rows = []
    for scheme in schemes:
        sub = replace(spec, scenario=scn, scheme=scheme)
        artifact_list = run(sub)
        mean, _, _ = reward_statistics(artifact_list)
        mean_thr, mean_ee = aggregate_broadband(artifact_list)
        rows.append((scheme, scn.plan.mode, "", mean, mean_thr, mean_ee))
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        metrics.write_table(outdir / "tradeoff_sharing.csv", "tradeoff",
                            rows)
    return rows


def sweep_deadline(spec, deadlines, schemes=None, outdir=None):
    if not deadlines:
        raise RunnerError("empty sweep axis")
    schemes = schemes or [spec.scheme]
    rows = []
    for deadline in deadlines:
        scn = scenario_mod.with_deadline(spec.scenario, deadline)
        for scheme in schemes:
            sub = replace(spec, scenario=scn, scheme=scheme)
            artifact_list = run(sub)
            mean, _, _ = reward_statistics(artifact_list)
            rows.append((scheme, scn.plan.mode, deadline, mean))
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        metrics.write_table(outdir / "deadline_sweep.csv", "deadline_sweep",
                            rows)
    return rows


def sweep_num_iot(spec, j_values, schemes=None):
    if not j_values:
        raise RunnerError("empty sweep axis")
    schemes = schemes or [spec.scheme]
    rows = []
    for j in j_values:
        scn = scenario_mod.with_num_iot(spec.scenario, j)
        for scheme in schemes:
            sub = replace(spec, scenario=scn, scheme=scheme)
            artifact_list = run(sub)
            mean, _, _ = reward_statistics(artifact_list)
            mean_thr, mean_ee = aggregate_broadband(artifact_list)
            rows.append((scheme, scn.plan.mode, j, mean, mean_thr, mean_ee))
    return rows


def report(outdir):
    """Human-readable digest of a run directory."""
    summary = json.loads((Path(outdir) / "summary.json").read_text())
    lines = [f"mode={summary['mode']} base_seed={summary['base_seed']}"]
    for scheme in sorted(summary["schemes"]):
        entry = summary["schemes"][scheme]
        mean = entry["mean_inference_reward"]
        thr = entry["mean_throughput_bps"]
        ee = entry["mean_energy_efficiency_bpj"]
        lines.append(
            f"  {scheme:<12} reps={entry['replications']:<4} "
            f"reward={mean if mean is None else round(mean, 4)} "
            f"throughput={thr if thr is None else round(thr, 1)} "
            f"EE={ee if ee is None else round(ee, 1)}")
    return "\n".join(lines)
