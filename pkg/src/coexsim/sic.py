"""Frame-level receiver: capture, intra-slot and inter-slot successive
interference cancellation over the uplink slots of one frame.

Decoding is a fixed-point iteration. Within a slot, transmissions are
attempted in descending received-power order; a success cancels the
transmission from its slot and every replica of the same packet from the
other slots of the frame (perfect cancellation), after which the slot is
re-scanned. Sweeps over the slots repeat until a full sweep decodes
nothing. The outcome is deterministic and, under perfect cancellation,
independent of the sweep order.
"""

from dataclasses import dataclass, field
from typing import NamedTuple


class SlotTransmission(NamedTuple):
    user: object
    packet: object          # shared by all replicas of the same packet
    gain_power: float       # realized |h|^2 * P in watts
    threshold: float        # minimum SINR for decoding


@dataclass
class FrameSignalLog:
    slots: list             # one list of SlotTransmission per uplink slot
    noise_power: float

    def validate(self):
        for index, slot in enumerate(self.slots):
            users = [tx.user for tx in slot]
            if len(users) != len(set(users)):
                raise ValueError(f"slot {index}: duplicate user transmission")
            for tx in slot:
                if tx.gain_power < 0:
                    raise ValueError(f"slot {index}: negative gain")
        return self


@dataclass
class DecodeOutcome:
    decoded: dict           # packet id -> slot index of first success
    undecoded: set
    iterations: int = 0
    events: list = field(default_factory=list)  # (packet, slot) decode order

    def decoded_pairs(self):
        return set(self.decoded.items())


def _scan_slot(slot, noise):
    """Strongest-first capture attempt over one slot's remaining
    transmissions; returns the first decodable one, or None. Weaker
    transmissions are still attempted after a stronger one fails, which
    only matters when per-user thresholds differ below 1."""
    total = noise
    for tx in slot:
        total += tx.gain_power
    for tx in sorted(slot, key=lambda t: -t.gain_power):
        interference = total - tx.gain_power
        if tx.gain_power >= tx.threshold * interference:
            return tx
    return None


def slot_capture_pass(slot, noise):
    """Intra-slot SIC on a single slot: repeatedly decode and cancel until
    nothing more passes. Returns decode events in order; input untouched."""
    remaining = list(slot)
    events = []
    while remaining:
        hit = _scan_slot(remaining, noise)
        if hit is None:
            break
        events.append(hit)
        remaining.remove(hit)
    return events


def decode_frame(log):
    """Run capture + intra/inter-slot SIC to its fixed point."""
    slots = [list(s) for s in log.slots]
    noise = log.noise_power
    all_packets = {tx.packet for slot in slots for tx in slot}
    decoded = {}
    events = []
    sweeps = 0

    progressed = True
    while progressed:
        progressed = False
        for index in range(len(slots)):
            while True:
                hit = _scan_slot(slots[index], noise)
                if hit is None:
                    break
                decoded[hit.packet] = index
                events.append((hit.packet, index))
                progressed = True
                for other in slots:
                    other[:] = [tx for tx in other if tx.packet != hit.packet]
        if progressed:
            sweeps += 1

    return DecodeOutcome(
        decoded=decoded,
        undecoded=all_packets - decoded.keys(),
        iterations=sweeps,
        events=events,
    )
