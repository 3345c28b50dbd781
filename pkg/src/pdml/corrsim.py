"""Correlation-domain simulator for a GNSS tracking channel under interference.

Models the complex correlator outputs (taps) of a receiver tracking one
spreading code while one of four channel conditions holds: clean, multipath,
spoofing, or broadband jamming.  Everything downstream (the distortion
monitor, the power monitor, the decision-region design) consumes the tap
vectors produced here.

The tap at code offset tau, relative to the prompt, is

    xi(tau) = beta * ( sqrt(P_A) R(tau - dtau_A) exp(j dtheta_A)
                     + sqrt(eta P_A) R(tau - dtau_I) exp(j dtheta_I)
                     + xi_N(tau) )

where R is the unit triangular code autocorrelation, beta is the AGC scale,
and xi_N is zero-mean complex Gaussian noise whose lag correlation follows
the same triangle.  The eta term is a second code-structured component and
stands in for either a multipath echo or a counterfeit signal; jamming
carries no code structure and enters as an inflated noise floor instead.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

# Code chip width tau_c. All code offsets below are expressed in chips, so
# this stays 1.0; it is named rather than inlined to keep formulas readable.
CHIP = 1.0


class Hypothesis(enum.IntEnum):
    """Channel condition. The index order is load-bearing downstream: cost
    matrices and confusion matrices are indexed by it, and classification
    ties resolve toward the lower index."""

    H0 = 0  # clean
    H1 = 1  # multipath
    H2 = 2  # spoofing
    H3 = 3  # jamming


def autocorr(tau):
    """Unit triangular code autocorrelation.

    Parameters
    ----------
    tau : float or ndarray
        Code offset in chips.

    Returns
    -------
    float or ndarray
        max(0, 1 - |tau|/tau_c), matching the input shape. Even in tau,
        peak value 1 at tau = 0, identically zero for |tau| >= 1 chip.
    """
    return np.maximum(0.0, 1.0 - np.abs(tau) / CHIP)


@dataclass(frozen=True, eq=False)
class TapGrid:
    """Symmetric correlator tap offsets spanning [-1, +1] chips.

    Build through :func:`make_tap_grid`; the constructor performs no
    validation of its own.
    """

    l: int
    offsets: np.ndarray  # shape (l,), ascending, exact 0.0 at the centre
    spacing: float       # 2 tau_c / (l - 1)
    chip_width: float = CHIP


def make_tap_grid(l: int) -> TapGrid:
    """Construct the tap grid for an odd tap count.

    Parameters
    ----------
    l : int
        Number of taps, odd and >= 3.

    Returns
    -------
    TapGrid

    Raises
    ------
    ValueError
        If ``l`` is even or below 3.

    Notes
    -----
    Offsets are computed as integer ratios k/half for k in [-half, half],
    half = (l-1)/2, so the endpoints are exactly -1.0 and +1.0 and the
    centre tap is exactly 0.0 regardless of l.
    """
    if l < 3 or l % 2 == 0:
        raise ValueError(f"tap count must be odd and >= 3, got {l}")
    half = (l - 1) // 2
    offsets = np.arange(-half, half + 1, dtype=float) / half * CHIP
    return TapGrid(l=l, offsets=offsets, spacing=2.0 * CHIP / (l - 1))


@dataclass(frozen=True)
class NoiseModel:
    """In-band noise description.

    Attributes
    ----------
    n0 : float
        Thermal noise spectral density (normalized units).
    m0 : float
        Multi-access noise spectral density riding on top of n0.
    t_accum : float
        Coherent accumulation interval in seconds.
    """

    n0: float
    m0: float = 0.0
    t_accum: float = 0.02

    def __post_init__(self):
        # Zero total density is allowed: it yields exact noiseless taps,
        # useful for calibration. Normalized fits reject it separately.
        if self.n0 < 0.0 or self.m0 < 0.0:
            raise ValueError("noise spectral densities must be >= 0")
        if self.t_accum <= 0.0:
            raise ValueError("accumulation interval must be positive")

    @property
    def sigma_n_sq(self) -> float:
        """Per-quadrature tap noise variance, (n0 + m0) / (2 t_accum)."""
        return (self.n0 + self.m0) / (2.0 * self.t_accum)


def noise_from_cn0(cn0_dbhz: float, t_accum: float = 0.02, p_auth: float = 1.0) -> NoiseModel:
    """Noise model for a given carrier-to-noise-density ratio.

    C/N0 fixes the thermal density relative to the authentic signal power:
    n0 = p_auth / 10**(cn0_dbhz / 10). Multi-access noise is left at zero;
    jamming is applied as a separate variance inflation at simulation time.
    """
    return NoiseModel(n0=p_auth / 10.0 ** (cn0_dbhz / 10.0), m0=0.0, t_accum=t_accum)


@dataclass(frozen=True, eq=False)
class NoiseCovariance:
    """Lag correlation of the tap noise on a grid, with cached factorizations.

    ``q`` is the unit-diagonal Toeplitz matrix q[a, b] = R(|a - b| spacing).
    ``chol`` is its lower Cholesky factor and ``q_inv`` its inverse; both are
    precomputed because every fit and every noise draw reuses them.
    """

    q: np.ndarray
    chol: np.ndarray
    q_inv: np.ndarray


def noise_covariance(grid: TapGrid) -> NoiseCovariance:
    """Build the tap noise lag-correlation matrix and its factorizations.

    Raises
    ------
    ValueError
        If the sampled kernel fails the Cholesky factorization. The
        triangular kernel is positive definite for spacings below one chip,
        so this only fires on a malformed grid.
    """
    half = (grid.l - 1) // 2
    idx = np.arange(grid.l)
    # Integer lag / integer half keeps the entries exact (0.8, 0.6, ... for
    # l = 11) instead of accumulating float spacing error.
    q = autocorr(np.abs(idx[:, None] - idx[None, :]) / half)
    try:
        chol = np.linalg.cholesky(q)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"tap noise covariance for l={grid.l} is not positive definite") from exc
    q_inv = np.linalg.inv(q)
    q_inv = 0.5 * (q_inv + q_inv.T)  # restore exact symmetry after inv
    return NoiseCovariance(q=q, chol=chol, q_inv=q_inv)


def sample_noise(cov: NoiseCovariance, sigma_n_sq: float, rng: np.random.Generator, size: int | None = None):
    """Draw lag-correlated complex Gaussian tap noise.

    Real and imaginary parts are independent zero-mean Gaussian vectors,
    each with covariance sigma_n_sq * q, so the complex process satisfies
    E[xi(a) conj(xi(b))] = 2 sigma_n_sq q[a, b].

    Parameters
    ----------
    cov : NoiseCovariance
    sigma_n_sq : float
        Per-quadrature variance (>= 0).
    rng : numpy.random.Generator
    size : int, optional
        When given, returns ``size`` draws as a (size, l) matrix; the real
        block is consumed from the stream before the imaginary block. A
        single draw (size=None) uses the same stream layout as size=1.

    Returns
    -------
    ndarray
        Complex, shape (l,) or (size, l).
    """
    if sigma_n_sq < 0.0:
        raise ValueError("noise variance must be >= 0")
    n = 1 if size is None else int(size)
    l = cov.q.shape[0]
    re = rng.standard_normal((n, l))
    im = rng.standard_normal((n, l))
    out = math.sqrt(sigma_n_sq) * (re @ cov.chol.T + 1j * (im @ cov.chol.T))
    return out[0] if size is None else out


def agc_scale(eta: float, p_auth: float, jnr: float, kappa: float = 1.0) -> float:
    """Ideal AGC gain keeping total gain-controlled in-band power constant.

    beta = 1 / sqrt(1 + eta p_auth kappa + jnr) with kappa the fraction of
    interference power falling in band (1 by default): the AGC divides out
    exactly the power the interference added.
    """
    return 1.0 / math.sqrt(1.0 + eta * p_auth * kappa + jnr)


@dataclass(frozen=True)
class ScenarioParams:
    """One channel condition plus everything needed to simulate its taps.

    ``beta`` may be left as None, in which case the ideal-AGC value from
    :func:`agc_scale` is filled in. Power ratios (eta, jnr) are linear.
    """

    hypothesis: Hypothesis
    noise: NoiseModel
    p_auth: float = 1.0
    dtau_a: float = 0.0   # tracking code-phase misalignment, chips
    dtheta_a: float = 0.0
    eta: float = 0.0      # interference-to-authentic power ratio
    dtau_i: float = 0.0   # interference code offset, chips
    dtheta_i: float = 0.0
    jnr: float = 0.0      # jammer-to-noise ratio
    beta: float | None = None

    def __post_init__(self):
        if self.p_auth <= 0.0:
            raise ValueError("authentic power must be positive")
        if self.eta < 0.0 or self.jnr < 0.0:
            raise ValueError("power ratios must be >= 0")
        h = Hypothesis(self.hypothesis)
        object.__setattr__(self, "hypothesis", h)
        if h in (Hypothesis.H0, Hypothesis.H3) and self.eta != 0.0:
            raise ValueError(f"{h.name} carries no code-structured interference, eta must be 0")
        if h is not Hypothesis.H3 and self.jnr != 0.0:
            raise ValueError(f"jnr must be 0 under {h.name}")
        if self.beta is None:
            object.__setattr__(self, "beta", agc_scale(self.eta, self.p_auth, self.jnr))
        if self.beta <= 0.0:
            raise ValueError("AGC scale must be positive")

    @property
    def noise_var_eff(self) -> float:
        """Per-quadrature tap noise variance before AGC scaling; broadband
        jamming enters here as a floor inflation by (1 + jnr)."""
        return self.noise.sigma_n_sq * (1.0 + self.jnr)


@dataclass(frozen=True, eq=False)
class TapVector:
    """Complex correlator outputs on a grid for one accumulation epoch."""

    values: np.ndarray
    grid: TapGrid

    def __post_init__(self):
        if self.values.shape != (self.grid.l,):
            raise ValueError(f"expected {self.grid.l} tap values, got shape {self.values.shape}")


def simulate_tap_matrix(
    params: ScenarioParams,
    grid: TapGrid,
    rng: np.random.Generator,
    n: int,
    cov: NoiseCovariance | None = None,
) -> np.ndarray:
    """Simulate ``n`` independent tap vectors as an (n, l) complex matrix.

    The deterministic signal part is shared across rows; only the noise
    differs. Passing a precomputed ``cov`` avoids refactorizing the same
    grid in tight loops.
    """
    if cov is None:
        cov = noise_covariance(grid)
    sig = math.sqrt(params.p_auth) * autocorr(grid.offsets - params.dtau_a) * np.exp(1j * params.dtheta_a)
    sig = sig + math.sqrt(params.eta * params.p_auth) * autocorr(grid.offsets - params.dtau_i) * np.exp(
        1j * params.dtheta_i
    )
    noise = sample_noise(cov, params.noise_var_eff, rng, size=n)
    return params.beta * (sig[None, :] + noise)


def simulate_taps(
    params: ScenarioParams,
    grid: TapGrid,
    rng: np.random.Generator,
    cov: NoiseCovariance | None = None,
) -> TapVector:
    """Simulate one accumulation epoch of correlator outputs."""
    return TapVector(values=simulate_tap_matrix(params, grid, rng, 1, cov=cov)[0], grid=grid)
