import itertools
import random

from coexsim.sic import (SlotTransmission, FrameSignalLog, decode_frame,
                         slot_capture_pass)

from oracles import exhaustive_decode, exhaustive_decoded_set

NOISE = 1.0


def tx(user, packet, gain, threshold=1.0):
    return SlotTransmission(user, packet, gain, threshold)


def log_of(slots, noise=NOISE):
    return FrameSignalLog([list(s) for s in slots], noise)


def as_plain(slots):
    return [[(t.user, t.packet, t.gain_power, t.threshold) for t in slot]
            for slot in slots]


def test_singleton_decodes_first_sweep():
    slots = [[tx("u", "p", 5.0)]]
    outcome = decode_frame(log_of(slots))
    assert outcome.decoded == {"p": 0}
    assert outcome.undecoded == set()
    assert outcome.iterations == 1


def test_single_below_threshold_undecoded():
    slots = [[tx("u", "p", 0.5)]]
    outcome = decode_frame(log_of(slots))
    assert outcome.decoded == {}
    assert outcome.undecoded == {"p"}


def test_classic_chain_unlocks_collision():
    # A and B collide in slot 0 below threshold; A is clean in slot 1, so
    # decoding it there removes its replica and frees B in slot 0
    slots = [
        [tx("a", "A", 3.0), tx("b", "B", 3.0)],
        [tx("a", "A", 4.0)],
    ]
    outcome = decode_frame(log_of(slots))
    assert outcome.decoded == {"A": 1, "B": 0}
    oracle = exhaustive_decoded_set(as_plain(slots), NOISE)
    assert set(outcome.decoded) == oracle


def test_mutual_blockage_stays_undecoded():
    slots = [
        [tx("a", "A", 3.0), tx("b", "B", 3.0)],
        [tx("a", "A", 2.0), tx("b", "B", 2.5)],
    ]
    outcome = decode_frame(log_of(slots))
    assert outcome.decoded == {}
    assert outcome.undecoded == {"A", "B"}
    assert exhaustive_decoded_set(as_plain(slots), NOISE) == set()


def test_capture_pass_strongest_only():
    # 10/(0.01+1) passes; after cancellation 0.01/1 fails
    slot = [tx("a", "A", 10.0), tx("b", "B", 0.01)]
    events = slot_capture_pass(slot, NOISE)
    assert [e.packet for e in events] == ["A"]
    assert len(slot) == 2  # input untouched


def test_capture_pass_cascade():
    slot = [tx("a", "A", 40.0), tx("b", "B", 8.0), tx("c", "C", 3.0)]
    # 40/(11+1)=3.33 ok; then 8/(3+1)=2 ok; then 3/1=3 ok
    events = slot_capture_pass(slot, NOISE)
    assert [e.packet for e in events] == ["A", "B", "C"]


def test_capture_pass_empty_slot():
    assert slot_capture_pass([], NOISE) == []


def test_capture_pass_lower_threshold_weaker_signal():
    # the stronger one needs SINR 5 and fails; the weaker one only needs
    # 0.2 and clears it, so the pass must keep scanning downward
    slot = [tx("a", "A", 6.0, threshold=5.0), tx("b", "B", 4.0,
                                                 threshold=0.2)]
    events = slot_capture_pass(slot, NOISE)
    assert [e.packet for e in events] == ["B", "A"]
    # after B cancels, A sees 6/1 >= 5


def test_broadband_style_no_replica_cancellation():
    # distinct packets per slot: decoding one never clears the other slot
    slots = [
        [tx("b", ("b", 0), 50.0)],
        [tx("b", ("b", 1), 0.2)],
    ]
    outcome = decode_frame(log_of(slots))
    assert outcome.decoded == {("b", 0): 0}
    assert outcome.undecoded == {("b", 1)}


def test_iterations_bounded_by_transmissions():
    rng = random.Random(8)
    for _ in range(50):
        slots = _random_frame(rng)
        total = sum(len(s) for s in slots)
        outcome = decode_frame(log_of(slots))
        assert outcome.iterations <= max(total, 1)
        assert set(outcome.decoded) | outcome.undecoded == {
            t.packet for s in slots for t in s}
        assert not (set(outcome.decoded) & outcome.undecoded)


def _random_frame(rng, max_packets=3, max_slots=3, max_replicas=2,
                  gains=(0.3, 1.0, 3.0, 9.0, 27.0), threshold=1.0):
    n_slots = rng.randint(1, max_slots)
    slots = [[] for _ in range(n_slots)]
    for p in range(rng.randint(1, max_packets)):
        replicas = rng.randint(1, min(max_replicas, n_slots))
        for s in rng.sample(range(n_slots), replicas):
            slots[s].append(tx(f"u{p}", f"P{p}", rng.choice(gains),
                               threshold))
    return slots


def test_matches_oracle_on_random_frames():
    rng = random.Random(77)
    for _ in range(300):
        slots = _random_frame(rng)
        outcome = decode_frame(log_of(slots))
        oracle_sets = exhaustive_decode(as_plain(slots), NOISE)
        assert len(oracle_sets) == 1  # order independence
        assert set(outcome.decoded) == set(next(iter(oracle_sets)))


def test_removing_interferer_never_shrinks_decoded_set():
    rng = random.Random(123)
    for _ in range(150):
        slots = _random_frame(rng)
        base = set(decode_frame(log_of(slots)).decoded)
        # delete one packet entirely; every other previously decoded packet
        # must still decode
        packets = {t.packet for s in slots for t in s}
        for victim in packets:
            reduced = [[t for t in s if t.packet != victim] for s in slots]
            after = set(decode_frame(log_of(reduced)).decoded)
            assert base - {victim} <= after


def test_first_success_slot_is_earliest_decodable():
    # replicas clean in slots 0 and 2: ascending sweep must report slot 0
    slots = [
        [tx("a", "A", 5.0)],
        [],
        [tx("a", "A", 7.0)],
    ]
    outcome = decode_frame(log_of(slots))
    assert outcome.decoded == {"A": 0}


def test_mixed_threshold_frame_against_oracle():
    combos = itertools.product((0.5, 1.0, 3.0), repeat=3)
    for th in combos:
        slots = [
            [tx("a", "A", 2.0, th[0]), tx("b", "B", 1.5, th[1])],
            [tx("c", "C", 1.0, th[2]), tx("a", "A", 0.7, th[0])],
        ]
        outcome = decode_frame(log_of(slots))
        assert set(outcome.decoded) == exhaustive_decoded_set(
            as_plain(slots), NOISE)


def test_log_validation_flags_duplicate_user():
    log = FrameSignalLog([[tx("a", "A", 1.0), tx("a", "A2", 1.0)]], NOISE)
    try:
        log.validate()
    except ValueError as err:
        assert "duplicate" in str(err)
    else:
        raise AssertionError("duplicate user not caught")
