"""Received-power monitor and the symmetric-difference distortion baseline.

Power and distortion are the two coordinates every measurement is reduced
to.  The power monitor reports total in-band received power in dB relative
to the interference-free nominal, so a clean channel reads 0 dB by
construction, code-structured interference adds its power fraction, and
broadband jamming raises the noise-floor term.  The symmetric-difference
statistic is the classic single-pair distortion check kept here as the
comparison baseline for the ML monitor: it sees only two taps, so it misses
a counterfeit peak once the pull-off leaves its spacing, and it cannot
separate genuine asymmetry from tracking-loop misalignment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corrsim import ScenarioParams, TapGrid, TapVector


@dataclass(frozen=True)
class PowerModel:
    """Power-measurement settings.

    sigma_p_db is the measurement noise of the power readout in dB.
    t_nominal is the accumulation interval the in-band noise bandwidth is
    normalized against: with t_accum == t_nominal the quiescent noise floor
    contributes 0.5 units of in-band power against an authentic signal of
    1.0, and stretching t_accum suppresses the floor, which is how the
    noise-free limit is reached in tests.
    """

    sigma_p_db: float = 0.1
    t_nominal: float = 0.02

    def __post_init__(self):
        if self.sigma_p_db < 0.0:
            raise ValueError("power measurement noise must be >= 0 dB")
        if self.t_nominal <= 0.0:
            raise ValueError("nominal accumulation interval must be positive")


@dataclass(frozen=True)
class Measurement:
    """One epoch reduced to the two monitored coordinates."""

    power_db: float    # received power, dB relative to interference-free nominal
    distortion: float  # ML distortion D or symmetric difference, per detector
    epoch: int = 0


def measure_power(
    params: ScenarioParams,
    model: PowerModel,
    rng: np.random.Generator,
    size: int | None = None,
):
    """Received in-band power relative to the interference-free nominal.

    The linear total is P_A (1 + eta) plus the noise-floor power
    (1 + jnr) / (2 t~), with t~ = t_accum / t_nominal; the nominal is the
    same expression with no interference. Gaussian readout noise of
    sigma_p_db is added in the dB domain. With sigma_p_db = 0 the readout
    is deterministic and strictly increasing in both eta and jnr.

    Returns a float, or an ndarray of ``size`` independent readouts.
    """
    t_norm = params.noise.t_accum / model.t_nominal
    floor = 1.0 / (2.0 * t_norm)
    total = params.p_auth * (1.0 + params.eta) + floor * (1.0 + params.jnr)
    nominal = params.p_auth + floor
    clean_db = 10.0 * np.log10(total / nominal)
    noise = rng.standard_normal(1 if size is None else int(size)) * model.sigma_p_db
    out = clean_db + noise
    return float(out[0]) if size is None else out


def default_sd_offset(grid: TapGrid) -> float:
    """Default symmetric-difference tap offset for a grid.

    The classic early-late spacing is half a chip; grids whose spacing does
    not divide 0.5 cannot host it, so the default is the positive grid
    offset nearest 0.5 chips, ties toward the smaller offset (0.4 on the
    11-tap grid, exactly 0.5 where representable).
    """
    positive = grid.offsets[grid.offsets > 0.0]
    order = np.lexsort((positive, np.abs(positive - 0.5 * grid.chip_width)))
    return float(positive[order[0]])


def sd_batch(values: np.ndarray, grid: TapGrid, d: float) -> np.ndarray:
    """Symmetric difference of every row of an (n, l) tap matrix."""
    values = np.atleast_2d(values)
    i_minus = _tap_index(grid, -d)
    i_plus = _tap_index(grid, +d)
    i_zero = _tap_index(grid, 0.0)
    num = np.abs(values[:, i_minus] - values[:, i_plus])
    den = np.abs(values[:, i_zero])
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / den
    # A dead prompt tap cannot normalize anything; order such epochs as
    # maximally distorted unless the pair difference is dead too.
    out = np.where(den > 0.0, out, np.where(num > 0.0, np.inf, 0.0))
    return out


def symmetric_difference(taps: TapVector, d: float) -> float:
    """|xi(-d) - xi(+d)| / |xi(0)| for a tap pair at +-d chips.

    Zero for any noiseless, perfectly centered single signal regardless of
    amplitude or carrier phase; positive the moment the correlation is
    asymmetric about the prompt, whether the cause is an attack, an echo,
    or mere tracking misalignment. Scale-invariant by construction.

    Raises
    ------
    ValueError
        If -d, +d, or the prompt is not on the tap grid (d must be a
        positive multiple of the grid spacing, within the grid span).
    """
    return float(sd_batch(taps.values[None, :], taps.grid, d)[0])


def _tap_index(grid: TapGrid, offset: float) -> int:
    hit = np.flatnonzero(np.isclose(grid.offsets, offset, rtol=0.0, atol=1e-9))
    if hit.size != 1:
        raise ValueError(
            f"offset {offset:+.3f} chips is not on the {grid.l}-tap grid (spacing {grid.spacing:.3f})"
        )
    return int(hit[0])
