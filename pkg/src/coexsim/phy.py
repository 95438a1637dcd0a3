"""Link-level computations: path loss, Rayleigh fading, noise, SINR,
decoding thresholds, and the broadband user's rate/power selection.

All quantities are SI units. Channel power gains |h|^2 are exponentially
distributed (squared magnitude of a circularly-symmetric complex Gaussian)
with mean equal to the large-scale gain beta.
"""

import math
from dataclasses import dataclass

LIGHT_SPEED = 299792458.0       # m/s
BOLTZMANN = 1.380649e-23        # J/K


@dataclass(frozen=True)
class LinkBudget:
    beta: float             # mean channel power gain E{|h|^2}
    noise_power: float      # W within the sub-band
    tx_power: float         # W
    rate: float             # bit/s
    sinr_threshold: float   # 2^(rate/width) - 1


def pathloss_gain(distance, params):
    """Mean channel power gain beta = Gt*Gr*(c/(4*pi*fc))^2 * d^-eta."""
    if distance <= 0:
        raise ValueError(f"distance must be positive, got {distance}")
    wavelength_term = LIGHT_SPEED / (4.0 * math.pi * params.carrier_freq)
    return (params.antenna_gain_tx * params.antenna_gain_rx
            * wavelength_term ** 2 * distance ** (-params.pathloss_exponent))


def sample_channel_power(beta, rng):
    """One |h|^2 draw, exponential with mean beta."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return rng.expovariate(1.0 / beta)


def noise_power(sub_band_width, params):
    """Thermal noise power k_B * T * F * W, noise figure applied linearly."""
    return (BOLTZMANN * params.noise_temperature
            * 10.0 ** (params.noise_figure_db / 10.0) * sub_band_width)


def sinr(target_gain_power, interferer_gain_powers, noise):
    """Received-power ratio: target over (co-band interference + noise)."""
    return target_gain_power / (sum(interferer_gain_powers) + noise)


def decode_threshold(rate, sub_band_width):
    """Minimum SINR that supports `rate` over `sub_band_width`."""
    if rate <= 0 or sub_band_width <= 0:
        raise ValueError("rate and width must be positive")
    return 2.0 ** (rate / sub_band_width) - 1.0


def iot_rate(params):
    """One packet per slot: 8 * L bytes / slot duration."""
    return 8.0 * params.iot_packet_bytes / params.slot_duration


def make_link_budget(beta, sub_band_width, rate, tx_power, params):
    return LinkBudget(
        beta=beta,
        noise_power=noise_power(sub_band_width, params),
        tx_power=tx_power,
        rate=rate,
        sinr_threshold=decode_threshold(rate, sub_band_width),
    )


def interference_free_success_prob(budget):
    """Pr(SINR >= threshold) with no interferers under exponential fading:
    exp(-threshold * noise / (beta * P))."""
    if budget.tx_power <= 0:
        raise ValueError("tx_power must be positive")
    exponent = (budget.sinr_threshold * budget.noise_power
                / (budget.beta * budget.tx_power))
    return math.exp(-exponent)


def select_broadband_rate(params, beta_b, sub_band_width):
    """Largest rate meeting the target erasure at P <= P_max, clamped to the
    configured maximum rate."""
    if beta_b <= 0:
        raise ValueError(f"beta_b must be positive, got {beta_b}")
    margin = -math.log(1.0 - params.broadband_target_erasure)
    snr_cap = (margin * beta_b * params.max_power
               / noise_power(sub_band_width, params))
    unclamped = sub_band_width * math.log2(1.0 + snr_cap)
    return min(params.broadband_max_rate, unclamped)


def broadband_power(rate, beta_b, sub_band_width, params):
    """Transmit power that makes the interference-free erasure equal the
    target, clamped to P_max. Held constant within a deployment."""
    if rate <= 0:
        raise ValueError(f"rate must be positive, got {rate}")
    margin = -math.log(1.0 - params.broadband_target_erasure)
    threshold = decode_threshold(rate, sub_band_width)
    power = threshold * noise_power(sub_band_width, params) / (beta_b * margin)
    return min(power, params.max_power)
