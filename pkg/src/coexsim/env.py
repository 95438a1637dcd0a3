"""Slotted, frame-synchronous uplink world.

Per frame: IoT users place packet replicas in the uplink slots, the
broadband user fills every uplink slot of its sub-band, channel powers are
drawn, the frame is decoded per sub-band with capture + SIC, the broadband
rateless block advances, IoT latency bookkeeping and the deadline drop rule
are applied, and per-slot Bernoulli arrivals refill empty queues. The last
slot of the frame carries feedback; users observe outcomes only there.

Latency convention: a packet generated at absolute slot g has age t - g at
slot t. Observations happen at the feedback slot, so a packet decoded at
the k-th uplink slot of a frame is delivered with latency
(age at previous feedback) + k.
"""

import random
from dataclasses import dataclass, field
from typing import NamedTuple

from . import phy
from .sic import SlotTransmission, FrameSignalLog, decode_frame


class AgentState(NamedTuple):
    latency: int        # slots since packet generation
    repetitions: int    # replicas transmitted since generation
    decoded: int        # 1 only in the one observation after a delivery


EMPTY_STATE = AgentState(0, 0, 0)


class EnvError(ValueError):
    pass


@dataclass
class BroadbandBlockState:
    block_len: int
    received: int = 0
    blocks_completed: int = 0
    frames_for_current_block: int = 0
    f_samples: list = field(default_factory=list)


def broadband_progress(block, successes):
    """Advance the rateless block by one frame's decoded packets. Surplus
    successes beyond the block length carry into the next block."""
    block.received += successes
    block.frames_for_current_block += 1
    while block.received >= block.block_len:
        block.f_samples.append(block.frames_for_current_block)
        block.frames_for_current_block = 0
        block.blocks_completed += 1
        block.received -= block.block_len
    return block


class UserOutcome(NamedTuple):
    state: AgentState       # end-of-frame observation
    had_packet: bool        # a decision was made for this frame
    terminal: bool
    delivered: bool
    dropped: bool
    latency: int | None     # delivery latency in slots, if delivered


@dataclass
class FrameResult:
    frame: int
    outcomes: list                  # one UserOutcome per IoT user
    broadband_slot_success: list    # 0/1 per uplink slot
    broadband_successes: int
    arrivals_accepted: int
    arrivals_discarded: int
    signal_logs: dict | None = None


def classify_packet_outcome(age_at_decision, reps_before, placed_slots,
                            decode_slot, deadline, frame_length,
                            count_all_replicas=False):
    """End-of-frame outcome for one queued packet.

    placed_slots: 1-based uplink slot numbers used this frame.
    decode_slot: 1-based slot of the first successful reception, or None.

    A decode counts as delivered only if its latency meets the deadline;
    a late decode is a drop, like a deadline exceedance at feedback time.
    The delivered state counts the replicas up to the first-success slot
    (count_all_replicas=True counts the full schedule instead); all other
    outcomes count every placed replica.
    """
    sent_all = reps_before + len(placed_slots)
    age_at_feedback = age_at_decision + frame_length
    if decode_slot is not None:
        latency = age_at_decision + decode_slot
        if latency <= deadline:
            if count_all_replicas:
                sent = sent_all
            else:
                sent = reps_before + sum(1 for s in placed_slots
                                         if s <= decode_slot)
            return UserOutcome(AgentState(latency, sent, 1),
                               True, True, True, False, latency)
        return UserOutcome(AgentState(age_at_feedback, sent_all, 0),
                           True, True, False, True, None)
    if age_at_feedback > deadline:
        return UserOutcome(AgentState(age_at_feedback, sent_all, 0),
                           True, True, False, True, None)
    return UserOutcome(AgentState(age_at_feedback, sent_all, 0),
                       True, False, False, False, None)


class Environment:
    """Owns all mutable simulation state; single-threaded. Independent
    replications use independent instances and rng streams."""

    def __init__(self, scenario, deployment, rng, record_events=False,
                 record_signals=False, count_all_replicas=False,
                 arrival_rng=None):
        params = scenario.params
        plan = scenario.plan
        if len(deployment.iot_distances) != params.num_iot:
            raise EnvError("deployment/user-count mismatch")
        self.params = params
        self.plan = plan
        self.rng = rng
        # dedicated arrival stream: keeps the packet workload identical
        # across schemes when the caller shares it (paired comparisons)
        self.arrival_rng = arrival_rng if arrival_rng is not None \
            else random.Random(rng.getrandbits(64))
        self.frame_length = params.frame_length
        self.uplink_slots = params.frame_length - 1
        self.deadline = params.latency_deadline
        self.num_iot = params.num_iot
        self.arrival_prob = params.iot_arrival_prob

        width_bb = plan.broadband_width()
        width_iot = plan.iot_width()
        self.beta_b = phy.pathloss_gain(deployment.broadband_distance, params)
        self.broadband_rate = phy.select_broadband_rate(
            params, self.beta_b, width_bb)
        self.broadband_tx_power = phy.broadband_power(
            self.broadband_rate, self.beta_b, width_bb, params)
        self.broadband_threshold = phy.decode_threshold(
            self.broadband_rate, width_bb)
        self.noise_bb = phy.noise_power(width_bb, params)

        self.iot_rate = phy.iot_rate(params)
        self.iot_threshold = (phy.decode_threshold(self.iot_rate, width_iot)
                              if params.num_iot else None)
        self.noise_iot = (phy.noise_power(width_iot, params)
                          if params.num_iot else None)
        self.beta_iot = [phy.pathloss_gain(d, params)
                         for d in deployment.iot_distances]
        self.shared_band = plan.shared_band()

        self.block = BroadbandBlockState(params.broadband_block_len)
        self.gen_slot = [None] * params.num_iot
        self.reps_sent = [0] * params.num_iot
        self.frame_index = 0
        self.last_result = None

        self.accepted = 0
        self.delivered = 0
        self.dropped = 0
        self.discarded = 0

        self.count_all_replicas = count_all_replicas
        self.record_events = record_events
        self.record_signals = record_signals
        self.event_rows = [] if record_events else None

    # -- observation side ---------------------------------------------------

    def has_packet(self, user):
        return self.gen_slot[user] is not None

    def decision_state(self, user):
        """State the user acts on at the start of the upcoming frame."""
        g = self.gen_slot[user]
        if g is None:
            return EMPTY_STATE
        age = self.frame_index * self.frame_length - 1 - g
        return AgentState(age, self.reps_sent[user], 0)

    def observe(self, user):
        """End-of-frame partial observation: this user's (l, v, decoded)."""
        if self.last_result is None:
            return self.decision_state(user)
        return self.last_result.outcomes[user].state

    def in_flight(self):
        return sum(1 for g in self.gen_slot if g is not None)

    # -- dynamics ------------------------------------------------------------

    def _placement(self, user, action):
        if isinstance(action, int):
            if not 0 <= action <= self.uplink_slots:
                raise EnvError(
                    f"user {user}: repetition degree {action} outside "
                    f"0..{self.uplink_slots}")
            placed = tuple(range(1, action + 1))
        else:
            placed = tuple(sorted(action))
            if len(set(placed)) != len(placed):
                raise EnvError(f"user {user}: duplicate replica slots")
            if placed and not (1 <= placed[0] and
                               placed[-1] <= self.uplink_slots):
                raise EnvError(f"user {user}: replica slot outside uplink")
        if placed and self.gen_slot[user] is None:
            raise EnvError(f"user {user}: transmission with empty queue")
        return placed

    def step_frame(self, actions):
        if len(actions) != self.num_iot:
            raise EnvError(f"expected {self.num_iot} actions, got "
                           f"{len(actions)}")
        placements = [self._placement(j, a) for j, a in enumerate(actions)]
        frame_start = self.frame_index * self.frame_length
        rng = self.rng
        uplink = self.uplink_slots

        bb_slots = [[] for _ in range(uplink)]
        iot_slots = bb_slots if self.shared_band else \
            [[] for _ in range(uplink)]

        p_b = self.broadband_tx_power
        for s in range(uplink):
            gain = phy.sample_channel_power(self.beta_b, rng) * p_b
            bb_slots[s].append(SlotTransmission(
                "b", ("b", frame_start + s), gain, self.broadband_threshold))

        p_max = self.params.max_power
        for j, placed in enumerate(placements):
            if not placed:
                continue
            packet = ("i", j, self.gen_slot[j])
            beta = self.beta_iot[j]
            for s in placed:
                gain = phy.sample_channel_power(beta, rng) * p_max
                iot_slots[s - 1].append(SlotTransmission(
                    j, packet, gain, self.iot_threshold))

        if self.shared_band:
            log_bb = FrameSignalLog(bb_slots, self.noise_bb)
            outcome_bb = decode_frame(log_bb)
            outcome_iot = outcome_bb
            logs = {"shared": log_bb}
        else:
            log_bb = FrameSignalLog(bb_slots, self.noise_bb)
            log_iot = FrameSignalLog(iot_slots, self.noise_iot)
            outcome_bb = decode_frame(log_bb)
            outcome_iot = decode_frame(log_iot)
            logs = {"broadband": log_bb, "iot": log_iot}

        bb_bits = [1 if ("b", frame_start + s) in outcome_bb.decoded else 0
                   for s in range(uplink)]
        bb_successes = sum(bb_bits)
        broadband_progress(self.block, bb_successes)

        outcomes = []
        terminal_users = []
        empty_at_start = []
        for j in range(self.num_iot):
            g = self.gen_slot[j]
            if g is None:
                empty_at_start.append(j)
                outcomes.append(None)
                continue
            age = frame_start - 1 - g
            slot_index = outcome_iot.decoded.get(("i", j, g))
            decode_slot = None if slot_index is None else slot_index + 1
            result = classify_packet_outcome(
                age, self.reps_sent[j], placements[j], decode_slot,
                self.deadline, self.frame_length,
                count_all_replicas=self.count_all_replicas)
            outcomes.append(result)
            if result.terminal:
                terminal_users.append(j)
                if result.delivered:
                    self.delivered += 1
                else:
                    self.dropped += 1
            else:
                self.reps_sent[j] = result.state.repetitions

        # Bernoulli arrivals at every slot of the frame. A queue occupied at
        # frame start (including one that terminates at this feedback slot)
        # discards arrivals; an empty queue accepts the first one.
        accepted = 0
        discarded = 0
        p_a = self.arrival_prob
        if p_a > 0:
            arrival_rng = self.arrival_rng
            for j in range(self.num_iot):
                occupied = self.gen_slot[j] is not None
                for i in range(self.frame_length):
                    if arrival_rng.random() < p_a:
                        if occupied:
                            discarded += 1
                        else:
                            self.gen_slot[j] = frame_start + i
                            occupied = True
                            accepted += 1
        self.accepted += accepted
        self.discarded += discarded

        # users with no packet at frame start observe whatever arrived
        # during the frame (aged to the feedback slot), or the empty state
        feedback_slot = frame_start + self.frame_length - 1
        for j in empty_at_start:
            g = self.gen_slot[j]
            state = EMPTY_STATE if g is None else \
                AgentState(feedback_slot - g, 0, 0)
            outcomes[j] = UserOutcome(state, False, False, False, False,
                                      None)

        for j in terminal_users:
            self.gen_slot[j] = None
            self.reps_sent[j] = 0

        result = FrameResult(
            frame=self.frame_index,
            outcomes=outcomes,
            broadband_slot_success=bb_bits,
            broadband_successes=bb_successes,
            arrivals_accepted=accepted,
            arrivals_discarded=discarded,
            signal_logs=logs if self.record_signals else None,
        )
        if self.record_events:
            self.event_rows.append((
                self.frame_index,
                tuple(len(p) for p in placements),
                tuple((j, out.latency) for j, out in enumerate(outcomes)
                      if out.delivered),
                bb_successes,
            ))
        self.frame_index += 1
        self.last_result = result
        return result


def reset(scenario, deployment, rng, **kwargs):
    """Fresh environment: empty queues, new rateless block, link budgets
    fixed from the deployment."""
    return Environment(scenario, deployment, rng, **kwargs)


def write_frame_log(path, event_rows):
    """Append-only delimited export of recorded frame events."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("frame\tdegrees\tdeliveries\tbroadband_successes\n")
        for frame, degrees, deliveries, successes in event_rows:
            deg = ",".join(str(d) for d in degrees)
            del_ = ",".join(f"{j}:{lat}" for j, lat in deliveries)
            fh.write(f"{frame}\t{deg}\t{del_}\t{successes}\n")
