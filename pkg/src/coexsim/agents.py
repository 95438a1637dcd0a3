"""Policies and learning: the reward rule, tabular Q-learning and double
Q-learning, softmax exploration, value iteration on the single-user model,
and the static repetition-distribution baseline.

Tables are dicts keyed by (latency, repetitions) holding one value per
repetition degree. Only decision states (packet queued, not yet decoded)
are ever keyed; terminal successors contribute zero continuation value.
"""

import hashlib
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import phy


# ---------------------------------------------------------------------------
# reward
# ---------------------------------------------------------------------------

def reward(latency, repetitions, decoded):
    """Delivery pays 50/((l+1)^2 + (v+1)); waiting costs
    max(-1, -0.03*l - 0.01*v)."""
    if decoded:
        return 50.0 / ((latency + 1.0) ** 2 + (repetitions + 1.0))
    return max(-1.0, -0.03 * latency - 0.01 * repetitions)


def reward_of_state(state):
    return reward(state[0], state[1], state[2])


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------

def _key(state):
    return (state[0], state[1])


class Transition(NamedTuple):
    state: tuple
    action: int
    next_state: tuple
    reward: float
    terminal: bool


@dataclass
class QTable:
    n_actions: int
    learning_rate: float = 0.1
    discount: float = 0.95
    temperature: float | None = None
    lr_power: float | None = None   # per-visit rate 1/n^power when set
    q: dict = field(default_factory=dict)
    visits: dict = field(default_factory=dict)

    def row(self, state):
        key = _key(state)
        row = self.q.get(key)
        if row is None:
            row = [0.0] * self.n_actions
            self.q[key] = row
        return row

    def action_values(self, state):
        row = self.q.get(_key(state))
        return list(row) if row is not None else [0.0] * self.n_actions

    def step_size(self, state, action):
        """Constant rate, or the per-visit polynomial 1/n^power."""
        if self.lr_power is None:
            return self.learning_rate
        key = (state[0], state[1], action)
        n = self.visits.get(key, 0) + 1
        self.visits[key] = n
        return 1.0 / n ** self.lr_power


@dataclass
class QTablePair:
    n_actions: int
    learning_rate: float = 0.1
    discount: float = 0.95
    temperature: float | None = None
    update_rule: str = "as_printed"
    lr_power: float | None = None
    q1: dict = field(default_factory=dict)
    q2: dict = field(default_factory=dict)
    visits1: dict = field(default_factory=dict)
    visits2: dict = field(default_factory=dict)

    def _row(self, table, state):
        key = _key(state)
        row = table.get(key)
        if row is None:
            row = [0.0] * self.n_actions
            table[key] = row
        return row

    def _step_size(self, visits, state, action):
        if self.lr_power is None:
            return self.learning_rate
        key = (state[0], state[1], action)
        n = visits.get(key, 0) + 1
        visits[key] = n
        return 1.0 / n ** self.lr_power

    def action_values(self, state):
        """Mean of the two tables, the quantity exploration and the final
        policy act on."""
        key = _key(state)
        r1 = self.q1.get(key)
        r2 = self.q2.get(key)
        if r1 is None and r2 is None:
            return [0.0] * self.n_actions
        if r1 is None:
            r1 = [0.0] * self.n_actions
        if r2 is None:
            r2 = [0.0] * self.n_actions
        return [(a + b) / 2.0 for a, b in zip(r1, r2)]


def ql_update(table, transition):
    """Standard single-table rule with self-argmax bootstrap."""
    mu = table.step_size(transition.state, transition.action)
    row = table.row(transition.state)
    if transition.terminal:
        target = transition.reward
    else:
        nxt = table.action_values(transition.next_state)
        target = transition.reward + table.discount * max(nxt)
    a = transition.action
    row[a] = (1.0 - mu) * row[a] + mu * target
    return table


def doql_update(pair, transition, rng):
    """Update one of the two tables, chosen by a fair coin.

    as_printed:  select the bootstrap action with the *other* table's
                 argmax, evaluate it with the table being updated.
    cross_eval:  select with the updated table's own argmax, evaluate with
                 the other table (van Hasselt's original).
    Returns which table (1 or 2) was touched.
    """
    update_first = rng.random() < 0.5
    if update_first:
        own, other, visits = pair.q1, pair.q2, pair.visits1
    else:
        own, other, visits = pair.q2, pair.q1, pair.visits2
    mu = pair._step_size(visits, transition.state, transition.action)
    row = pair._row(own, transition.state)
    if transition.terminal:
        target = transition.reward
    else:
        key = _key(transition.next_state)
        zeros = [0.0] * pair.n_actions
        own_next = own.get(key, zeros)
        other_next = other.get(key, zeros)
        if pair.update_rule == "as_printed":
            a_sel = other_next.index(max(other_next))
            bootstrap = own_next[a_sel]
        elif pair.update_rule == "cross_eval":
            a_sel = own_next.index(max(own_next))
            bootstrap = other_next[a_sel]
        else:
            raise ValueError(f"unknown update rule {pair.update_rule!r}")
        target = transition.reward + pair.discount * bootstrap
    a = transition.action
    row[a] = (1.0 - mu) * row[a] + mu * target
    return 1 if update_first else 2


# ---------------------------------------------------------------------------
# exploration and policy extraction
# ---------------------------------------------------------------------------

def softmax_probs(values, temperature):
    """Boltzmann weights, max-subtracted for numerical stability."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    top = max(values)
    weights = [math.exp((v - top) / temperature) for v in values]
    total = sum(weights)
    return [w / total for w in weights]


def softmax_select(table, state, rng, temperature=None):
    """Sample an action with probability proportional to exp(Q/tau); for a
    table pair Q is the mean of the two tables."""
    tau = temperature if temperature is not None else table.temperature
    probs = softmax_probs(table.action_values(state), tau)
    u = rng.random()
    acc = 0.0
    for action, p in enumerate(probs):
        acc += p
        if u < acc:
            return action
    return len(probs) - 1


def greedy_action(values):
    """Argmax with ties broken toward the smaller repetition degree."""
    best = max(values)
    return values.index(best)


def extract_policy(table):
    """Greedy policy over every state the table has seen. States never
    visited fall back to degree 0 at lookup time."""
    if isinstance(table, QTablePair):
        keys = set(table.q1) | set(table.q2)
    else:
        keys = set(table.q)
    return {key: greedy_action(table.action_values((key[0], key[1], 0)))
            for key in sorted(keys)}


def policy_action(policy, state, default=0):
    return policy.get(_key(state), default)


def table_fingerprint(table):
    """Stable digest, used to prove inference leaves tables untouched."""
    parts = []
    if isinstance(table, QTablePair):
        sources = (("q1", table.q1), ("q2", table.q2))
    else:
        sources = (("q", table.q),)
    for name, data in sources:
        for key in sorted(data):
            parts.append(f"{name}:{key}:{[repr(v) for v in data[key]]}")
    return hashlib.sha256("\n".join(parts).encode()).hexdigest()


def save_tables(path, table):
    """Flat checkpoint: one line per (l, v, action) with both table values
    (a single-table learner writes the same value twice)."""
    if isinstance(table, QTablePair):
        q1, q2 = table.q1, table.q2
    else:
        q1 = q2 = table.q
    keys = sorted(set(q1) | set(q2))
    zeros = [0.0] * table.n_actions
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("l,v,action,q1,q2\n")
        for key in keys:
            r1 = q1.get(key, zeros)
            r2 = q2.get(key, zeros)
            for a in range(table.n_actions):
                fh.write(f"{key[0]},{key[1]},{a},{r1[a]!r},{r2[a]!r}\n")


def load_tables(path, learning_rate=0.1, discount=0.95, paired=True):
    rows = {}
    n_actions = 0
    with open(path, "r", encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            l, v, a, v1, v2 = line.rstrip("\n").split(",")
            key = (int(l), int(v))
            a = int(a)
            n_actions = max(n_actions, a + 1)
            rows.setdefault(key, []).append((a, float(v1), float(v2)))
    if paired:
        out = QTablePair(n_actions, learning_rate, discount)
        for key, entries in rows.items():
            r1 = [0.0] * n_actions
            r2 = [0.0] * n_actions
            for a, v1, v2 in entries:
                r1[a], r2[a] = v1, v2
            out.q1[key] = r1
            out.q2[key] = r2
        return out
    out = QTable(n_actions, learning_rate, discount)
    for key, entries in rows.items():
        row = [0.0] * n_actions
        for a, v1, _ in entries:
            row[a] = v1
        out.q[key] = row
    return out


# ---------------------------------------------------------------------------
# single-user model and value iteration
# ---------------------------------------------------------------------------

# transition-structure cache keyed by (frame_length, deadline); probabilities
# are filled per success-probability from the stored exponents
_STRUCTURE_CACHE = {}


def _model_structure(frame_length, deadline, count_all_replicas=False):
    cached = _STRUCTURE_CACHE.get((frame_length, deadline,
                                   count_all_replicas))
    if cached is not None:
        return cached

    n_actions = frame_length
    starts = [(frame_length - 1 - i, 0) for i in range(frame_length)]
    states = []
    index = {}
    frontier = []
    for s in starts:
        if s not in index:
            index[s] = len(states)
            states.append(s)
            frontier.append(s)
    while frontier:
        l, v = frontier.pop()
        nl = l + frame_length
        if nl > deadline:
            continue
        for a in range(n_actions):
            nxt = (nl, v + a)
            if nxt not in index:
                index[nxt] = len(states)
                states.append(nxt)
                frontier.append(nxt)

    # entries sorted by (state, action); prob = (1-q)^fail_exp * q^succ_flag
    ent_src = []
    ent_act = []
    ent_fail_exp = []
    ent_succ = []
    ent_reward = []
    ent_next = []
    ent_latency = []
    row_ptr = [0]
    for si, (l, v) in enumerate(states):
        for a in range(n_actions):
            usable = max(0, min(a, deadline - l))
            for k in range(1, usable + 1):
                ent_src.append(si)
                ent_act.append(a)
                ent_fail_exp.append(k - 1)
                ent_succ.append(1)
                sent = v + a if count_all_replicas else v + k
                ent_reward.append(reward(l + k, sent, 1))
                ent_next.append(-1)
                ent_latency.append(l + k)
            # everything else (no success, or success past the deadline)
            # lands on the frame-end state; terminal when past the deadline
            nl, nv = l + frame_length, v + a
            ent_src.append(si)
            ent_act.append(a)
            ent_fail_exp.append(usable)
            ent_succ.append(0)
            ent_reward.append(reward(nl, nv, 0))
            ent_next.append(-1 if nl > deadline else index[(nl, nv)])
            ent_latency.append(-1)
            row_ptr.append(len(ent_src))

    cached = {
        "states": states,
        "index": index,
        "n_actions": n_actions,
        "ent_src": np.asarray(ent_src, dtype=np.int32),
        "ent_act": np.asarray(ent_act, dtype=np.int32),
        "ent_fail_exp": np.asarray(ent_fail_exp, dtype=np.int32),
        "ent_succ": np.asarray(ent_succ, dtype=np.int8),
        "ent_reward": np.asarray(ent_reward, dtype=np.float64),
        "ent_next": np.asarray(ent_next, dtype=np.int32),
        "ent_latency": np.asarray(ent_latency, dtype=np.int32),
        "row_ptr": np.asarray(row_ptr, dtype=np.int64),
    }
    _STRUCTURE_CACHE[(frame_length, deadline, count_all_replicas)] = cached
    return cached


@dataclass
class SingleUserModel:
    """Sparse per-action transition kernel over packet states under the
    no-contention assumption, with rewards attached to landing states."""
    states: list
    index: dict
    n_actions: int
    success_prob: float
    frame_length: int
    deadline: int
    ent_src: np.ndarray
    ent_act: np.ndarray
    ent_prob: np.ndarray
    ent_reward: np.ndarray
    ent_next: np.ndarray
    ent_latency: np.ndarray
    row_ptr: np.ndarray
    start_index: np.ndarray
    start_prob: np.ndarray

    def row_sums(self):
        flat = np.zeros(len(self.states) * self.n_actions)
        np.add.at(flat, self.ent_src * self.n_actions + self.ent_act,
                  self.ent_prob)
        return flat.reshape(len(self.states), self.n_actions)

    def start_distribution(self):
        return {self.states[i]: p
                for i, p in zip(self.start_index, self.start_prob)}


def single_user_success_prob(scenario, distance):
    """Interference-free per-slot decode probability for an IoT user at the
    given distance, in its own sub-band at full power."""
    params = scenario.params
    budget = phy.make_link_budget(
        beta=phy.pathloss_gain(distance, params),
        sub_band_width=scenario.plan.iot_width(),
        rate=phy.iot_rate(params),
        tx_power=params.max_power,
        params=params,
    )
    return phy.interference_free_success_prob(budget)


def build_single_user_model(scenario, success_prob,
                            count_all_replicas=False):
    """Exact per-packet chain: action a gives geometric first-success over
    its a replica slots, otherwise the packet ages by one frame. Success
    past the deadline counts as the dropped branch."""
    if not 0.0 <= success_prob <= 1.0:
        raise ValueError(f"success_prob {success_prob} outside [0, 1]")
    params = scenario.params
    structure = _model_structure(params.frame_length,
                                 params.latency_deadline,
                                 count_all_replicas)
    q = success_prob
    fail = 1.0 - q
    prob = fail ** structure["ent_fail_exp"].astype(np.float64)
    prob = np.where(structure["ent_succ"] == 1, prob * q, prob)

    p_a = params.iot_arrival_prob
    frame_length = params.frame_length
    weights = []
    for i in range(frame_length):
        weights.append((1.0 - p_a) ** i * p_a if p_a > 0 else 1.0)
    total = sum(weights)
    start_states = [(frame_length - 1 - i, 0) for i in range(frame_length)]
    start_index = np.asarray(
        [structure["index"][s] for s in start_states], dtype=np.int32)
    start_prob = np.asarray([w / total for w in weights], dtype=np.float64)

    return SingleUserModel(
        states=structure["states"],
        index=structure["index"],
        n_actions=structure["n_actions"],
        success_prob=q,
        frame_length=frame_length,
        deadline=params.latency_deadline,
        ent_src=structure["ent_src"],
        ent_act=structure["ent_act"],
        ent_prob=prob,
        ent_reward=structure["ent_reward"],
        ent_next=structure["ent_next"],
        ent_latency=structure["ent_latency"],
        row_ptr=structure["row_ptr"],
        start_index=start_index,
        start_prob=start_prob,
    )


def _check_normalized(model, tol=1e-9):
    sums = model.row_sums()
    if not np.allclose(sums, 1.0, atol=tol):
        worst = float(np.abs(sums - 1.0).max())
        raise ValueError(f"transition kernel rows not normalized "
                         f"(max deviation {worst:.3e})")


def value_iteration(model, tol=1e-9, discount=0.95):
    """Sweep V(s) <- max_a sum P(s'|s,a)(R(s') + phi V(s')) to a fixed
    point; terminal landings contribute no continuation value."""
    _check_normalized(model)
    n_states = len(model.states)
    n_actions = model.n_actions
    nonterminal = model.ent_next >= 0
    safe_next = np.where(nonterminal, model.ent_next, 0)
    flat_idx = model.ent_src.astype(np.int64) * n_actions + model.ent_act
    v = np.zeros(n_states)
    while True:
        continuation = np.where(nonterminal, v[safe_next], 0.0)
        contrib = model.ent_prob * (model.ent_reward
                                    + discount * continuation)
        q_flat = np.bincount(flat_idx, weights=contrib,
                             minlength=n_states * n_actions)
        q = q_flat.reshape(n_states, n_actions)
        v_new = q.max(axis=1)
        delta = float(np.abs(v_new - v).max())
        v = v_new
        if delta < tol:
            break
    actions = q.argmax(axis=1)
    values = {s: float(v[i]) for i, s in enumerate(model.states)}
    policy = {s: int(actions[i]) for i, s in enumerate(model.states)}
    return values, policy


def model_action_values(model, values, discount=0.95):
    """Q(s, a) induced by a state-value function on the model."""
    n_states = len(model.states)
    n_actions = model.n_actions
    v = np.zeros(n_states)
    for s, val in values.items():
        v[model.index[s]] = val
    nonterminal = model.ent_next >= 0
    continuation = np.where(nonterminal, v[np.where(nonterminal,
                                                    model.ent_next, 0)], 0.0)
    contrib = model.ent_prob * (model.ent_reward + discount * continuation)
    flat_idx = model.ent_src.astype(np.int64) * n_actions + model.ent_act
    q_flat = np.bincount(flat_idx, weights=contrib,
                         minlength=n_states * n_actions)
    return q_flat.reshape(n_states, n_actions)


def vi_initialize(table, model, discount=None):
    """Fill the table(s) with the action-value function of the solved
    model, so the greedy policy starts at the planner's answer."""
    disc = discount if discount is not None else table.discount
    values, _ = value_iteration(model, discount=disc)
    q = model_action_values(model, values, discount=disc)
    for i, state in enumerate(model.states):
        row = [float(x) for x in q[i]]
        if isinstance(table, QTablePair):
            table.q1[state] = list(row)
            table.q2[state] = list(row)
        else:
            table.q[state] = list(row)
    return table


def predict_avg_terminal_reward(model, policy):
    """Expected terminal (delivery or drop) reward of one packet under the
    given policy, weighted by the stationary packet start distribution.
    Undiscounted absorption expectation; intermediate penalties excluded,
    matching the per-packet reward metric."""
    n_actions = model.n_actions
    order = sorted(range(len(model.states)),
                   key=lambda i: -model.states[i][0])
    expected = np.zeros(len(model.states))
    for si in order:
        a = policy.get(model.states[si], 0)
        lo = model.row_ptr[si * n_actions + a]
        hi = model.row_ptr[si * n_actions + a + 1]
        acc = 0.0
        for e in range(lo, hi):
            nxt = model.ent_next[e]
            if nxt < 0:
                acc += model.ent_prob[e] * model.ent_reward[e]
            else:
                acc += model.ent_prob[e] * expected[nxt]
        expected[si] = acc
    return float(sum(p * expected[i]
                     for i, p in zip(model.start_index, model.start_prob)))


def terminal_outcome_distribution(model, policy):
    """(latency -> probability) over delivered packets plus the drop
    probability, under the policy, from the stationary start distribution."""
    n_actions = model.n_actions
    mass = np.zeros(len(model.states))
    for i, p in zip(model.start_index, model.start_prob):
        mass[i] += p
    latency_prob = {}
    drop_prob = 0.0
    order = sorted(range(len(model.states)),
                   key=lambda i: model.states[i][0])
    for si in order:
        m = mass[si]
        if m <= 0.0:
            continue
        a = policy.get(model.states[si], 0)
        lo = model.row_ptr[si * n_actions + a]
        hi = model.row_ptr[si * n_actions + a + 1]
        for e in range(lo, hi):
            p = m * model.ent_prob[e]
            nxt = model.ent_next[e]
            if nxt >= 0:
                mass[nxt] += p
            elif model.ent_latency[e] >= 0:
                lat = int(model.ent_latency[e])
                latency_prob[lat] = latency_prob.get(lat, 0.0) + p
            else:
                drop_prob += p
    return latency_prob, drop_prob


# ---------------------------------------------------------------------------
# static repetition-distribution baseline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DegreeDistribution:
    degrees: tuple
    probs: tuple

    def __post_init__(self):
        if abs(sum(self.probs) - 1.0) > 1e-12:
            raise ValueError("degree probabilities must sum to 1")
        if any(d < 0 for d in self.degrees):
            raise ValueError("degrees must be nonnegative")

    def check_support(self, uplink_slots):
        if max(self.degrees) > uplink_slots:
            raise ValueError(
                f"degree {max(self.degrees)} exceeds {uplink_slots} "
                f"uplink slots")

    def sample(self, rng):
        u = rng.random()
        acc = 0.0
        for d, p in zip(self.degrees, self.probs):
            acc += p
            if u < acc:
                return d
        return self.degrees[-1]


# degree distribution 0.25 z^2 + 0.60 z^3 + 0.15 z^8
IRSA_DISTRIBUTION = DegreeDistribution((2, 3, 8), (0.25, 0.60, 0.15))


def irsa_action(dist, rng, uplink_slots, placement="random"):
    """Sample a fresh degree for the frame; random placement scatters the
    replicas uniformly without replacement over the uplink slots,
    consecutive placement packs them from the first slot."""
    degree = dist.sample(rng)
    if placement == "consecutive":
        return degree
    slots = rng.sample(range(1, uplink_slots + 1), degree)
    return tuple(sorted(slots))
