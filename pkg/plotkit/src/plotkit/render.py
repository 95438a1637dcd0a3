"""The five figure kinds, each a pure function of its input tables.

Rendering is deterministic: a fixed style sheet, fixed series ordering
(sorted scheme/mode labels), and PNG output with constant metadata, so
re-rendering identical inputs gives identical bytes.
"""

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from . import schema
from .schema import SchemaError, read_table

FIGURE_KINDS = ("reward_curve", "latency_cdf", "reward_bars",
                "deadline_sweep", "tradeoff")

DEFAULT_INPUTS = {
    "reward_curve": ("training_rewards.csv",),
    "latency_cdf": ("latency_cdf.csv",),
    "reward_bars": ("inference_rewards.csv",),
    "deadline_sweep": ("deadline_sweep.csv",),
    "tradeoff": ("tradeoff.csv",),
}

# color per scheme, fixed so figures are comparable across runs
SCHEME_COLORS = {
    "VI": "#7E2F8E",
    "QL": "#EDB120",
    "QLPlusVI": "#D95319",
    "DoQL": "#0072BD",
    "DoQLPlusVI": "#77AC30",
    "IRSA": "#A2142F",
}
FALLBACK_COLORS = ("#4DBEEE", "#333333", "#FF80C0", "#6B8E23")
MODE_MARKERS = {"slicing": "o", "sharing": "s"}


@dataclass
class FigureSpec:
    kind: str
    inputs: list
    output: str
    title: str | None = None
    extra_inputs: list = field(default_factory=list)

    def validate(self):
        if self.kind not in FIGURE_KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}")
        for path in list(self.inputs) + list(self.extra_inputs):
            if not Path(path).exists():
                raise SchemaError(f"input table missing: {path}")
        return self


def _use_style():
    with resources.as_file(
            resources.files("plotkit") / "style.mplstyle") as path:
        plt.style.use(str(path))


def _color(scheme, index):
    return SCHEME_COLORS.get(
        scheme, FALLBACK_COLORS[index % len(FALLBACK_COLORS)])


def _label(scheme, mode, single_mode):
    return scheme if single_mode else f"{scheme} ({mode})"


def _grouped(rows):
    keys = sorted(schema.series_keys(rows))
    single_mode = len({mode for _, mode in keys}) == 1
    for index, (scheme, mode) in enumerate(keys):
        series = [r for r in rows if r["scheme"] == scheme
                  and r["mode"] == mode]
        yield index, scheme, mode, single_mode, series


def render(spec):
    """Render one figure file; returns the output path."""
    spec.validate()
    _use_style()
    builder = _BUILDERS[spec.kind]
    fig = builder(spec)
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, metadata={"Software": "plotkit"})
    plt.close(fig)
    return out


def _fig_reward_curve(spec):
    rows = read_table(spec.inputs[0], "training_rewards")
    fig, ax = plt.subplots()
    for index, scheme, mode, single, series in _grouped(rows):
        series.sort(key=lambda r: r["frame"])
        ax.plot([r["frame"] for r in series],
                [r["avg_reward"] for r in series],
                color=_color(scheme, index),
                linestyle="-" if mode == "slicing" else "--",
                label=_label(scheme, mode, single))
    ax.set_xlabel("frame")
    ax.set_ylabel("average reward per packet")
    ax.set_title(spec.title or "training rewards")
    ax.legend()
    fig.tight_layout()
    return fig


def _fig_latency_cdf(spec):
    rows = read_table(spec.inputs[0], "latency_cdf")
    fig, ax = plt.subplots()
    for index, scheme, mode, single, series in _grouped(rows):
        series.sort(key=lambda r: r["latency_ms"])
        ax.step([r["latency_ms"] for r in series],
                [r["cdf"] for r in series], where="post",
                color=_color(scheme, index),
                linestyle="-" if mode == "slicing" else "--",
                label=_label(scheme, mode, single))
    ax.set_xlabel("latency (ms)")
    ax.set_ylabel("CDF")
    ax.set_ylim(0.0, 1.02)   # plateau below 1 stays visible
    ax.set_title(spec.title or "latency distribution")
    ax.legend(loc="lower right")
    fig.tight_layout()
    return fig


def _fig_reward_bars(spec):
    rows = read_table(spec.inputs[0], "inference_rewards")
    fig, ax = plt.subplots()
    labels = []
    for index, scheme, mode, single, series in _grouped(rows):
        row = series[0]
        err = row["std_reward"] if row["std_reward"] is not None else 0.0
        ax.bar(index, row["avg_reward"], yerr=err, capsize=3,
               color=_color(scheme, index))
        labels.append(_label(scheme, mode, single))
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylabel("average reward per packet")
    ax.set_title(spec.title or "inference rewards")
    fig.tight_layout()
    return fig


def _fig_deadline_sweep(spec):
    rows = read_table(spec.inputs[0], "deadline_sweep")
    fig, ax = plt.subplots()
    for index, scheme, mode, single, series in _grouped(rows):
        series.sort(key=lambda r: r["deadline_slots"])
        ax.plot([r["deadline_slots"] for r in series],
                [r["avg_reward"] for r in series],
                marker=MODE_MARKERS.get(mode, "o"),
                color=_color(scheme, index),
                linestyle="-" if mode == "slicing" else "--",
                label=_label(scheme, mode, single))
    ax.set_xlabel("latency deadline (slots)")
    ax.set_ylabel("average reward per packet")
    ax.set_title(spec.title or "rewards vs deadline")
    ax.legend()
    fig.tight_layout()
    return fig


def _fig_tradeoff(spec):
    rows = read_table(spec.inputs[0], "tradeoff")
    for extra in spec.extra_inputs:
        rows.extend(read_table(extra, "tradeoff"))
    fig, (ax_top, ax_bottom) = plt.subplots(2, 1, sharex=True,
                                            figsize=(5.0, 5.6))
    for index, scheme, mode, single, series in _grouped(rows):
        color = _color(scheme, index)
        label = _label(scheme, mode, single)
        swept = sorted((r for r in series if r["b2_fraction"] is not None),
                       key=lambda r: r["b2_fraction"])
        points = [r for r in series if r["b2_fraction"] is None]
        for ax, column in ((ax_top, "throughput_bps"),
                           (ax_bottom, "energy_efficiency_bpj")):
            if swept:
                ax.plot([r["iot_avg_reward"] for r in swept],
                        [r[column] for r in swept],
                        marker=MODE_MARKERS.get(mode, "o"), color=color,
                        label=label if ax is ax_top else None)
            for row in points:
                ax.plot([row["iot_avg_reward"]], [row[column]],
                        marker="*", markersize=10, linestyle="none",
                        color=color,
                        label=label if ax is ax_top else None)
    ax_top.set_ylabel("broadband throughput (bit/s)")
    ax_bottom.set_ylabel("energy efficiency (bit/J)")
    ax_bottom.set_yscale("log")
    ax_bottom.set_xlabel("average reward per packet")
    ax_top.set_title(spec.title or "broadband cost of the repetition policy")
    ax_top.legend()
    fig.tight_layout()
    return fig


_BUILDERS = {
    "reward_curve": _fig_reward_curve,
    "latency_cdf": _fig_latency_cdf,
    "reward_bars": _fig_reward_bars,
    "deadline_sweep": _fig_deadline_sweep,
    "tradeoff": _fig_tradeoff,
}
