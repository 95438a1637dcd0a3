"""Reported quantities: latency CDF, per-packet reward series, broadband
throughput and energy efficiency, plus the delimited table writers whose
column schemas are the contract with the plotting tool.

Table files start with a `# schema=<name>.v1` line followed by a CSV
header. Writers use repr() for floats so identical runs produce identical
bytes.
"""

import csv
from dataclasses import dataclass, field


@dataclass(frozen=True)
class LatencySample:
    user: int
    latency_ms: float
    outcome: str            # "delivered" or "dropped"


def latency_cdf(samples, grid_ms):
    """Empirical CDF over all terminated packets. Dropped packets exceed
    every grid point, so the curve plateaus at the reliability level."""
    if not samples:
        raise ValueError("no latency samples")
    delivered = sorted(s.latency_ms for s in samples
                       if s.outcome == "delivered")
    total = len(samples)
    out = []
    idx = 0
    for x in grid_ms:
        while idx < len(delivered) and delivered[idx] <= x:
            idx += 1
        out.append((x, idx / total))
    return out


def throughput(broadband_rate, block_len, f_samples, frame_length):
    """rate * K / (mean frames per block * slots per frame): the rate
    scaled by the fraction of slots carrying novel payload."""
    if not len(f_samples):
        raise ValueError("no block-completion samples")
    mean_f = sum(f_samples) / len(f_samples)
    return broadband_rate * block_len / (mean_f * frame_length)


def energy_efficiency(throughput_bps, tx_power):
    if tx_power <= 0:
        raise ValueError("tx power must be positive")
    return throughput_bps / tx_power


def avg_reward_per_packet(events, window):
    """events: (frame, terminal reward) per terminated packet. Returns
    (window start frame, mean terminal reward) per nonempty window."""
    if window <= 0:
        raise ValueError("window must be positive")
    buckets = {}
    for frame, value in events:
        start = (frame // window) * window
        total, count = buckets.get(start, (0.0, 0))
        buckets[start] = (total + value, count + 1)
    return [(start, total / count)
            for start, (total, count) in sorted(buckets.items())]


def overall_mean_reward(events):
    if not events:
        return None
    return sum(value for _, value in events) / len(events)


@dataclass
class RunArtifacts:
    """Everything persisted for one replication."""
    scheme: str
    mode: str
    replication: int
    deployment_seed: int
    broadband_rate: float
    broadband_tx_power: float
    block_len: int
    frame_length: int
    latency_samples: list = field(default_factory=list)
    training_reward_events: list = field(default_factory=list)
    inference_reward_events: list = field(default_factory=list)
    f_samples: list = field(default_factory=list)
    throughput_bps: float | None = None
    energy_efficiency_bpj: float | None = None
    accepted: int = 0
    delivered: int = 0
    dropped: int = 0
    discarded: int = 0
    in_flight: int = 0

    def finalize(self):
        if self.f_samples:
            self.throughput_bps = throughput(
                self.broadband_rate, self.block_len, self.f_samples,
                self.frame_length)
            self.energy_efficiency_bpj = energy_efficiency(
                self.throughput_bps, self.broadband_tx_power)
        return self

    def check_consistency(self, rel_tol=1e-9):
        """Stored throughput must be recomputable from the raw samples and
        packets must reconcile exactly."""
        if self.f_samples:
            recomputed = throughput(
                self.broadband_rate, self.block_len, self.f_samples,
                self.frame_length)
            if abs(recomputed - self.throughput_bps) > \
                    rel_tol * abs(recomputed):
                raise ValueError("throughput does not recompute")
        if self.accepted != self.delivered + self.dropped + self.in_flight:
            raise ValueError(
                f"packet accounting broken: {self.accepted} accepted vs "
                f"{self.delivered}+{self.dropped}+{self.in_flight}")
        return True

    def mean_inference_reward(self):
        return overall_mean_reward(self.inference_reward_events)


# ---------------------------------------------------------------------------
# table writers (schemas consumed by the plotting tool)
# ---------------------------------------------------------------------------

SCHEMAS = {
    "latency_cdf": ("scheme", "mode", "latency_ms", "cdf"),
    "training_rewards": ("scheme", "mode", "frame", "avg_reward"),
    "inference_rewards": ("scheme", "mode", "avg_reward", "std_reward",
                          "replications"),
    "tradeoff": ("scheme", "mode", "b2_fraction", "iot_avg_reward",
                 "throughput_bps", "energy_efficiency_bpj"),
    "deadline_sweep": ("scheme", "mode", "deadline_slots", "avg_reward"),
}


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_table(path, schema_name, rows):
    columns = SCHEMAS[schema_name]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# schema={schema_name}.v1\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(
                    f"{schema_name}: row width {len(row)} != "
                    f"{len(columns)}")
            writer.writerow([_fmt(v) for v in row])


def read_table(path):
    """Returns (schema_name, columns, rows-as-string-lists)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith("# schema="):
            raise ValueError(f"{path}: missing schema line")
        schema_name = first.removeprefix("# schema=").removesuffix(".v1")
        reader = csv.reader(fh)
        columns = tuple(next(reader))
        rows = [row for row in reader]
    return schema_name, columns, rows
