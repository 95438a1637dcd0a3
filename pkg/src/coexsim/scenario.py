"""Experiment configuration: system constants, band plan, user deployment.

A Scenario bundles the physical/system parameters with a band plan and is
immutable once validated. Deployments (user distances) are sampled per
replication from the fixed placement rings around the base station.
"""

import configparser
import io
from dataclasses import dataclass, asdict, replace

MODE_SLICING = "slicing"
MODE_SHARING = "sharing"
MODES = (MODE_SLICING, MODE_SHARING)

# placement rings, meters
BROADBAND_DISTANCE_RANGE = (35.0, 75.0)
IOT_DISTANCE_RANGE = (100.0, 400.0)


class ScenarioError(ValueError):
    """Invalid configuration; `field` names the offending entry."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


@dataclass(frozen=True)
class SystemParams:
    bandwidth_total: float        # Hz
    slot_duration: float          # s
    frame_length: int             # slots per frame, incl. 1 feedback slot
    carrier_freq: float           # Hz
    pathloss_exponent: float
    antenna_gain_tx: float
    antenna_gain_rx: float
    noise_temperature: float      # K
    noise_figure_db: float        # dB
    max_power: float              # W
    iot_packet_bytes: int
    iot_arrival_prob: float       # per slot
    broadband_block_len: int      # source packets per coded block
    broadband_max_rate: float     # bit/s
    broadband_target_erasure: float
    latency_deadline: int         # slots
    num_iot: int


@dataclass(frozen=True)
class BandPlan:
    mode: str
    b1: float   # Hz, broadband-only sub-band
    b2: float   # Hz, IoT-only sub-band
    b3: float   # Hz, shared sub-band

    def broadband_width(self):
        return self.b1 if self.mode == MODE_SLICING else self.b3

    def iot_width(self):
        return self.b2 if self.mode == MODE_SLICING else self.b3

    def shared_band(self):
        return self.mode == MODE_SHARING


@dataclass(frozen=True)
class Deployment:
    broadband_distance: float
    iot_distances: tuple
    rng_seed: int | None = None


@dataclass(frozen=True)
class Scenario:
    params: SystemParams
    plan: BandPlan

    def allocation_matrix(self):
        """0/1 sub-band indicator rows, broadband first then IoT users."""
        if self.plan.mode == MODE_SLICING:
            rows = [(1, 0, 0)]
            rows += [(0, 1, 0)] * self.params.num_iot
        else:
            rows = [(0, 0, 1)] * (1 + self.params.num_iot)
        return rows


def table1_params(num_iot=10, latency_deadline=50, **overrides):
    """Default system constants used throughout the experiments."""
    base = dict(
        bandwidth_total=1e6,
        slot_duration=1e-3,
        frame_length=10,
        carrier_freq=2e9,
        pathloss_exponent=2.6,
        antenna_gain_tx=10.0,
        antenna_gain_rx=10.0,
        noise_temperature=190.0,
        noise_figure_db=5.0,
        max_power=0.2,
        iot_packet_bytes=128,
        iot_arrival_prob=0.1,
        broadband_block_len=32,
        broadband_max_rate=5e6,
        broadband_target_erasure=0.1,
        latency_deadline=latency_deadline,
        num_iot=num_iot,
    )
    base.update(overrides)
    return SystemParams(**base)


def slicing_plan(total_bandwidth, b2):
    """Orthogonal split: b1 for broadband, b2 for IoT, b1+b2 exact."""
    return BandPlan(MODE_SLICING, b1=total_bandwidth - b2, b2=b2, b3=0.0)


def sharing_plan(total_bandwidth):
    return BandPlan(MODE_SHARING, b1=0.0, b2=0.0, b3=total_bandwidth)


_POSITIVE_FIELDS = (
    "bandwidth_total", "slot_duration", "carrier_freq", "pathloss_exponent",
    "antenna_gain_tx", "antenna_gain_rx", "noise_temperature", "max_power",
    "iot_packet_bytes", "broadband_block_len", "broadband_max_rate",
)
_PROBABILITY_FIELDS = ("iot_arrival_prob", "broadband_target_erasure")


def validate(params, plan):
    """Check every invariant; returns an immutable Scenario or raises
    ScenarioError naming the offending field."""
    for name in _POSITIVE_FIELDS:
        if getattr(params, name) <= 0:
            raise ScenarioError(name, "must be strictly positive")
    for name in _PROBABILITY_FIELDS:
        p = getattr(params, name)
        if not 0.0 <= p <= 1.0:
            raise ScenarioError(name, f"probability {p} outside [0, 1]")
    if params.noise_figure_db < 0:
        raise ScenarioError("noise_figure_db", "must be nonnegative")
    if params.frame_length < 2:
        raise ScenarioError("frame_length",
                            "needs at least 1 uplink slot + 1 feedback slot")
    if params.latency_deadline < params.frame_length:
        raise ScenarioError(
            "latency_deadline",
            f"{params.latency_deadline} shorter than one frame "
            f"({params.frame_length} slots)")
    if params.num_iot < 0:
        raise ScenarioError("num_iot", "must be nonnegative")

    if plan.mode not in MODES:
        raise ScenarioError("mode", f"unknown mode {plan.mode!r}")
    for name in ("b1", "b2", "b3"):
        if getattr(plan, name) < 0:
            raise ScenarioError(name, "sub-band width must be nonnegative")
    total = plan.b1 + plan.b2 + plan.b3
    if total != params.bandwidth_total:
        raise ScenarioError(
            "b1+b2+b3",
            f"sub-bands sum to {total}, expected {params.bandwidth_total}")
    if plan.mode == MODE_SLICING:
        if plan.b3 != 0.0:
            raise ScenarioError("b3", "must be 0 under slicing")
        if plan.b1 <= 0 or plan.b2 <= 0:
            raise ScenarioError("b1/b2",
                                "slicing reserves a positive width per service")
    else:
        if plan.b1 != 0.0 or plan.b2 != 0.0:
            raise ScenarioError("b1/b2", "must be 0 under sharing")

    return Scenario(params=params, plan=plan)


def sample_deployment(scenario, rng, seed=None):
    """Uniform distances within the placement rings; deterministic given rng."""
    d_b = rng.uniform(*BROADBAND_DISTANCE_RANGE)
    d_j = tuple(rng.uniform(*IOT_DISTANCE_RANGE)
                for _ in range(scenario.params.num_iot))
    return Deployment(broadband_distance=d_b, iot_distances=d_j, rng_seed=seed)


# ---------------------------------------------------------------------------
# config file I/O (INI sections [system] and [band]; CLI overrides win)
# ---------------------------------------------------------------------------

_INT_FIELDS = {"frame_length", "iot_packet_bytes", "broadband_block_len",
               "latency_deadline", "num_iot"}


def dump_config(scenario):
    """Serialize to INI text; parse_config(dump_config(s)) round-trips."""
    cp = configparser.ConfigParser()
    cp["system"] = {k: repr(v) for k, v in asdict(scenario.params).items()}
    cp["band"] = {
        "mode": scenario.plan.mode,
        "b1": repr(scenario.plan.b1),
        "b2": repr(scenario.plan.b2),
        "b3": repr(scenario.plan.b3),
    }
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def parse_config(text, overrides=None):
    """Parse INI text (plus optional 'section.key=value' overrides) and
    validate. Overrides take precedence over file values."""
    cp = configparser.ConfigParser()
    cp.read_string(text)
    if overrides:
        for key, value in overrides.items():
            section, _, option = key.partition(".")
            if not option:
                raise ScenarioError(key, "override must be section.key=value")
            if not cp.has_section(section):
                cp.add_section(section)
            cp.set(section, option, value)

    if not cp.has_section("system"):
        raise ScenarioError("system", "missing [system] section")
    if not cp.has_section("band"):
        raise ScenarioError("band", "missing [band] section")

    sys_kwargs = {}
    for field in SystemParams.__dataclass_fields__:
        if not cp.has_option("system", field):
            raise ScenarioError(field, "missing from [system]")
        raw = cp.get("system", field)
        try:
            sys_kwargs[field] = int(raw) if field in _INT_FIELDS else float(raw)
        except ValueError:
            raise ScenarioError(field, f"cannot parse {raw!r}") from None
    params = SystemParams(**sys_kwargs)

    mode = cp.get("band", "mode", fallback="").strip().lower()
    band_kwargs = {}
    for field in ("b1", "b2", "b3"):
        raw = cp.get("band", field, fallback="0")
        try:
            band_kwargs[field] = float(raw)
        except ValueError:
            raise ScenarioError(field, f"cannot parse {raw!r}") from None
    plan = BandPlan(mode=mode, **band_kwargs)
    return validate(params, plan)


def load_config(path, overrides=None):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), overrides=overrides)


def with_num_iot(scenario, num_iot):
    return validate(replace(scenario.params, num_iot=num_iot), scenario.plan)


def with_deadline(scenario, deadline):
    return validate(replace(scenario.params, latency_deadline=deadline),
                    scenario.plan)


def with_b2_fraction(scenario, fraction):
    """Rebuild a slicing plan with the IoT sub-band at the given fraction of
    the total bandwidth."""
    if not 0.0 < fraction < 1.0:
        raise ScenarioError("b2_fraction", f"{fraction} outside (0, 1)")
    total = scenario.params.bandwidth_total
    return validate(scenario.params, slicing_plan(total, fraction * total))
