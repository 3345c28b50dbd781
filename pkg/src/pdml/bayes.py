"""Monte-Carlo scenario generation and Bayes-optimal decision regions.

The classifier never sees raw taps: every accumulation epoch is reduced to
a (received power, distortion) pair, and a decision map over that plane
assigns one of the four channel hypotheses to each cell.  The map is built
the brute-force Bayesian way: draw scenarios from declared priors, push
them through the same simulator and monitors the receiver runs, bin the
resulting measurements, and label each cell with the hypothesis that
minimizes the average misclassification cost of the samples that landed
there.  Cells no sample reached inherit the label of the nearest occupied
cell.  A time-indexed variant replays a scripted interference schedule
(onset epochs, spoofer pull-off ramps) through the same machinery.

Generation is embarrassingly parallel and deterministic: each scenario
draws from its own seed derived from (master seed, sample index), so the
result is identical regardless of execution order or worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .corrsim import (
    Hypothesis,
    NoiseCovariance,
    ScenarioParams,
    TapGrid,
    noise_covariance,
    noise_from_cn0,
    simulate_tap_matrix,
)
from .mle import MlConfig, fit_batch
from .monitors import Measurement, PowerModel, default_sd_offset, measure_power, sd_batch

DETECTORS = ("pdml", "sd")


# ---------------------------------------------------------------------------
# Priors.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MultipathPrior:
    """Echo amplitude ratio alpha (power ratio eta = alpha^2) and delay."""

    alpha_range: tuple[float, float] = (0.05, 0.2)
    delay_range: tuple[float, float] = (0.0, 1.2)  # chips

    def __post_init__(self):
        _check_range("alpha", self.alpha_range, lo=0.0)
        _check_range("delay", self.delay_range, lo=0.0)


@dataclass(frozen=True)
class SpoofPrior:
    """Counterfeit power advantage (log-uniform) and pull-off snapshot offset."""

    eta_range: tuple[float, float] = (0.6, 4.0)
    offset_range: tuple[float, float] = (0.0, 1.5)  # chips

    def __post_init__(self):
        _check_range("eta", self.eta_range, lo=1e-12)
        _check_range("offset", self.offset_range, lo=0.0)


@dataclass(frozen=True)
class JammerPrior:
    """Broadband jammer-to-noise ratio, uniform in dB."""

    jnr_db_range: tuple[float, float] = (3.0, 30.0)

    def __post_init__(self):
        _check_range("jnr_db", self.jnr_db_range)


@dataclass(frozen=True)
class HypothesisPriors:
    """Hypothesis weights and per-hypothesis parameter priors.

    cn0_range is the authentic carrier-to-noise-density window in dB-Hz;
    together with the accumulation interval t_accum it fixes the tap noise
    variance of every drawn scenario.
    """

    weights: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)
    h1: MultipathPrior = field(default_factory=MultipathPrior)
    h2: SpoofPrior = field(default_factory=SpoofPrior)
    h3: JammerPrior = field(default_factory=JammerPrior)
    cn0_range: tuple[float, float] = (40.0, 50.0)  # dB-Hz
    t_accum: float = 0.02  # seconds

    def __post_init__(self):
        if len(self.weights) != 4 or any(w < 0.0 for w in self.weights):
            raise ValueError("need four nonnegative hypothesis weights")
        total = float(sum(self.weights))
        if not math.isclose(total, 1.0, rel_tol=0.0, abs_tol=1e-9):
            raise ValueError(f"hypothesis weights must sum to 1, got {total}")
        object.__setattr__(self, "weights", tuple(float(w) / total for w in self.weights))
        _check_range("cn0", self.cn0_range)
        if self.t_accum <= 0.0:
            raise ValueError("t_accum must be positive")


def _check_range(name: str, rng_pair, lo: float | None = None):
    a, b = rng_pair
    if not (a <= b):
        raise ValueError(f"{name} range must be ordered, got {rng_pair}")
    if lo is not None and a < lo:
        raise ValueError(f"{name} range must start at >= {lo}, got {rng_pair}")


@dataclass(frozen=True)
class MonteCarloConfig:
    """Sampling plan: n_p drawn scenarios, n_m measurement epochs each."""

    n_p: int = 10_000
    n_m: int = 20

    def __post_init__(self):
        if self.n_p < 1 or self.n_m < 1:
            raise ValueError("n_p and n_m must be >= 1")


# ---------------------------------------------------------------------------
# Scenario drawing.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioDraw:
    """A drawn scenario plus the prior coordinates the cost model needs."""

    params: ScenarioParams
    alpha: float      # multipath amplitude ratio, 0 unless H1
    delay: float      # multipath delay in chips, 0 unless H1
    cn0_dbhz: float


def draw_scenario(h: Hypothesis, priors: HypothesisPriors, rng: np.random.Generator) -> ScenarioDraw:
    """Draw one scenario's parameters from the priors for hypothesis h.

    Draw order is fixed (C/N0, carrier phase, then the branch parameters)
    so a given rng state always yields the same scenario. Power ratios are
    log-uniform (eta for spoofing, jnr via uniform dB); everything else is
    uniform over its declared range. Multipath maps onto the interference
    term with eta = alpha^2 and a nonnegative delay.
    """
    h = Hypothesis(h)
    cn0 = rng.uniform(*priors.cn0_range)
    dtheta_a = rng.uniform(-math.pi, math.pi)
    eta = dtau_i = dtheta_i = jnr = alpha = delay = 0.0
    if h is Hypothesis.H1:
        alpha = rng.uniform(*priors.h1.alpha_range)
        delay = rng.uniform(*priors.h1.delay_range)
        dtheta_i = rng.uniform(-math.pi, math.pi)
        eta = alpha * alpha
        dtau_i = delay
    elif h is Hypothesis.H2:
        lo, hi = priors.h2.eta_range
        eta = math.exp(rng.uniform(math.log(lo), math.log(hi)))
        dtau_i = rng.uniform(*priors.h2.offset_range)
        dtheta_i = rng.uniform(-math.pi, math.pi)
    elif h is Hypothesis.H3:
        jnr = 10.0 ** (rng.uniform(*priors.h3.jnr_db_range) / 10.0)
    params = ScenarioParams(
        hypothesis=h,
        noise=noise_from_cn0(cn0, t_accum=priors.t_accum),
        p_auth=1.0,
        dtheta_a=dtheta_a,
        eta=eta,
        dtau_i=dtau_i,
        dtheta_i=dtheta_i,
        jnr=jnr,
    )
    return ScenarioDraw(params=params, alpha=alpha, delay=delay, cn0_dbhz=cn0)


# ---------------------------------------------------------------------------
# Dataset generation.
# ---------------------------------------------------------------------------

# Column order is the on-disk CSV contract; files.py reuses it.
DATASET_COLUMNS = (
    "epoch",
    "truth",
    "power_db",
    "distortion",
    "eta",
    "dtau_i",
    "dtheta_i",
    "alpha",
    "delay",
    "jnr",
    "cn0_dbhz",
)


@dataclass(eq=False)
class Dataset:
    """Column-oriented Monte-Carlo measurement set.

    Rows are measurement epochs: scenario i contributes rows
    [i n_m, (i+1) n_m). Scenario parameters repeat across their rows so
    each row carries the full cost-model coordinates.
    """

    detector: str
    taps: int
    n_p: int
    n_m: int
    seed: int
    epoch: np.ndarray
    truth: np.ndarray
    power_db: np.ndarray
    distortion: np.ndarray
    eta: np.ndarray
    dtau_i: np.ndarray
    dtheta_i: np.ndarray
    alpha: np.ndarray
    delay: np.ndarray
    jnr: np.ndarray
    cn0_dbhz: np.ndarray

    def __len__(self) -> int:
        return int(self.epoch.size)


def generate_dataset(
    priors: HypothesisPriors,
    mc: MonteCarloConfig,
    grid: TapGrid,
    detector: str,
    seed: int,
    power_model: PowerModel | None = None,
    rel_tol: float = 1e-6,
    max_iter: int = 30,
    sd_offset: float | None = None,
    workers: int = 1,
) -> Dataset:
    """Draw mc.n_p scenarios and measure each over mc.n_m epochs.

    Each scenario runs on its own generator seeded from (seed, index), and
    within a scenario the stream order is: hypothesis, prior draws, tap
    noise for all epochs, power readout noise for all epochs. Results are
    therefore byte-identical for any worker count, and the two detectors
    consume identical draws: swapping detector changes only the distortion
    column.

    The distortion column is the normalized ML statistic for detector
    "pdml" and the symmetric difference (offset sd_offset, defaulting to
    the grid offset nearest half a chip) for detector "sd".
    """
    if detector not in DETECTORS:
        raise ValueError(f"unknown detector {detector!r}, expected one of {DETECTORS}")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    power_model = power_model if power_model is not None else PowerModel()
    cov = noise_covariance(grid)
    sd_off = default_sd_offset(grid) if sd_offset is None else float(sd_offset)
    if detector == "sd":
        sd_batch(np.zeros((1, grid.l), dtype=complex), grid, sd_off)  # validate the offset early

    n = mc.n_p * mc.n_m
    truth = np.empty(n, dtype=np.int8)
    power_db = np.empty(n)
    dist = np.empty(n)
    theta = {name: np.empty(n) for name in ("eta", "dtau_i", "dtheta_i", "alpha", "delay", "jnr", "cn0_dbhz")}
    weights = np.asarray(priors.weights)

    def one_sample(i: int) -> None:
        rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
        h = Hypothesis(int(rng.choice(4, p=weights)))
        drawn = draw_scenario(h, priors, rng)
        p = drawn.params
        taps = simulate_tap_matrix(p, grid, rng, mc.n_m, cov=cov)
        pw = measure_power(p, power_model, rng, size=mc.n_m)
        if detector == "pdml":
            cfg = MlConfig.for_scenario(p, rel_tol=rel_tol, max_iter=max_iter)
            d = fit_batch(taps, grid, cov, cfg).cost
        else:
            d = sd_batch(taps, grid, sd_off)
        rows = slice(i * mc.n_m, (i + 1) * mc.n_m)
        truth[rows] = int(h)
        power_db[rows] = pw
        dist[rows] = d
        for name, value in (
            ("eta", p.eta),
            ("dtau_i", p.dtau_i),
            ("dtheta_i", p.dtheta_i),
            ("alpha", drawn.alpha),
            ("delay", drawn.delay),
            ("jnr", p.jnr),
            ("cn0_dbhz", drawn.cn0_dbhz),
        ):
            theta[name][rows] = value

    if workers == 1:
        for i in range(mc.n_p):
            one_sample(i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            # consume the iterator to surface worker exceptions
            list(pool.map(one_sample, range(mc.n_p)))

    return Dataset(
        detector=detector,
        taps=grid.l,
        n_p=mc.n_p,
        n_m=mc.n_m,
        seed=seed,
        epoch=np.arange(n, dtype=np.int64),
        truth=truth,
        power_db=power_db,
        distortion=dist,
        **theta,
    )


# ---------------------------------------------------------------------------
# Cost model and decision regions.
# ---------------------------------------------------------------------------


def default_cost_base() -> np.ndarray:
    """Default misclassification costs, rows = decision, columns = truth.

    Diagonal 0; missing an attack costs 1.0; calling an attack on a benign
    channel costs 0.7; confusing the two attack types costs 0.3, as does
    confusing the two benign states. Deciding clean under multipath is
    additionally scaled by alpha/alpha_ref at evaluation time, so mild
    multipath is nearly free to wave through.
    """
    return np.array(
        [
            [0.0, 0.3, 1.0, 1.0],
            [0.3, 0.0, 1.0, 1.0],
            [0.7, 0.7, 0.0, 0.3],
            [0.7, 0.7, 0.3, 0.0],
        ]
    )


@dataclass(frozen=True, eq=False)
class CostModel:
    """Misclassification costs C[decision, truth] with multipath scaling."""

    base: np.ndarray = field(default_factory=default_cost_base)
    alpha_ref: float = 0.8  # multipath severity treated as full-cost

    def __post_init__(self):
        b = np.asarray(self.base, dtype=float)
        object.__setattr__(self, "base", b)
        if b.shape != (4, 4):
            raise ValueError(f"cost matrix must be 4x4, got {b.shape}")
        if np.any(np.diag(b) != 0.0):
            raise ValueError("cost matrix diagonal must be zero")
        if np.any(b < 0.0):
            raise ValueError("costs must be >= 0")
        if self.alpha_ref <= 0.0:
            raise ValueError("alpha_ref must be positive")

    def sample_costs(self, decision: int, truth: np.ndarray, alpha: np.ndarray) -> np.ndarray:
        """Per-sample cost of announcing ``decision`` against drawn truths."""
        c = self.base[decision, truth]
        if decision == int(Hypothesis.H0):
            is_mp = truth == int(Hypothesis.H1)
            c = np.where(is_mp, c * alpha / self.alpha_ref, c)
        return c


@dataclass(frozen=True)
class DecisionGridSpec:
    """Axes of the decision plane: power in dB, distortion in log10."""

    p_min: float = -10.0
    p_max: float = 25.0
    p_bins: int = 200
    d_min: float = -1.0  # log10(distortion)
    d_max: float = 6.0
    d_bins: int = 200

    def __post_init__(self):
        if not (self.p_min < self.p_max and self.d_min < self.d_max):
            raise ValueError("grid axes must have positive extent")
        if self.p_bins < 1 or self.d_bins < 1:
            raise ValueError("grid must have at least one bin per axis")

    @classmethod
    def default_for(cls, detector: str) -> "DecisionGridSpec":
        """Detector-matched distortion axis: the ML statistic spans roughly
        [1e-1, 1e6], the symmetric difference roughly [1e-4, 1e1]."""
        if detector == "sd":
            return cls(d_min=-4.0, d_max=1.0)
        return cls()


@dataclass(frozen=True, eq=False)
class DecisionRegionGrid:
    """Labeled decision plane plus the provenance needed to reproduce it."""

    spec: DecisionGridSpec
    decisions: np.ndarray  # (p_bins, d_bins) int8 hypothesis indices
    detector: str = "pdml"
    seed: int = 0
    clamped: int = 0       # design samples that fell outside the axes
    config_hash: str = ""


def _cell_indices(spec: DecisionGridSpec, power_db: np.ndarray, distortion: np.ndarray):
    """Cell coordinates with edge clamping; also reports how many clamped.

    Nonpositive distortion is floored to the smallest value the log axis
    represents. Values at or beyond an upper axis edge count as clamped and
    land in the edge cell.
    """
    p = np.asarray(power_db, dtype=float)
    d = np.asarray(distortion, dtype=float)
    dp = (spec.p_max - spec.p_min) / spec.p_bins
    dd = (spec.d_max - spec.d_min) / spec.d_bins
    d_log = np.log10(np.maximum(d, 10.0**spec.d_min))
    ip = np.floor((p - spec.p_min) / dp)
    id_ = np.floor((d_log - spec.d_min) / dd)
    outside = (ip < 0) | (ip >= spec.p_bins) | (id_ < 0) | (id_ >= spec.d_bins)
    ip = np.clip(ip, 0, spec.p_bins - 1).astype(np.int64)
    id_ = np.clip(id_, 0, spec.d_bins - 1).astype(np.int64)
    return ip, id_, int(np.count_nonzero(outside))


def design_regions(
    dataset: Dataset,
    grid_spec: DecisionGridSpec,
    cost: CostModel,
    config_hash: str = "",
) -> DecisionRegionGrid:
    """Label every cell with the minimum-expected-cost hypothesis.

    For each cell, the decision is argmin_i mean(C[i, theta]) over the
    design samples that landed in the cell, ties toward the lower
    hypothesis index. Cells without samples copy the label of the nearest
    occupied cell, nearest in Euclidean distance on axes normalized to
    unit length, ties toward lower distortion and then lower power.
    """
    ip, id_, clamped = _cell_indices(grid_spec, dataset.power_db, dataset.distortion)
    ncells = grid_spec.p_bins * grid_spec.d_bins
    flat = ip * grid_spec.d_bins + id_
    counts = np.bincount(flat, minlength=ncells)

    means = np.empty((4, ncells))
    occupied = counts > 0
    for i in range(4):
        sums = np.bincount(flat, weights=cost.sample_costs(i, dataset.truth, dataset.alpha), minlength=ncells)
        means[i] = np.divide(sums, counts, out=np.full(ncells, np.inf), where=occupied)

    labels = np.argmin(means, axis=0).astype(np.int8)  # ties: lower index wins

    if not occupied.all():
        occ_flat = np.flatnonzero(occupied)
        occ_p, occ_d = np.divmod(occ_flat, grid_spec.d_bins)
        emp_flat = np.flatnonzero(~occupied)
        emp_p, emp_d = np.divmod(emp_flat, grid_spec.d_bins)
        # Cell centres in normalized coordinates, each axis scaled to [0, 1].
        tree = cKDTree(np.column_stack(((occ_p + 0.5) / grid_spec.p_bins, (occ_d + 0.5) / grid_spec.d_bins)))
        k = min(16, occ_flat.size)
        dists, idx = tree.query(
            np.column_stack(((emp_p + 0.5) / grid_spec.p_bins, (emp_d + 0.5) / grid_spec.d_bins)), k=k
        )
        dists = np.atleast_2d(dists.T).T
        idx = np.atleast_2d(idx.T).T
        # Among equidistant neighbours prefer the lower distortion bin,
        # then the lower power bin, so the fill is order-independent.
        tie = dists <= dists[:, :1] + 1e-12
        cand_d = np.where(tie, occ_d[idx], np.iinfo(np.int64).max)
        cand_p = np.where(tie, occ_p[idx], np.iinfo(np.int64).max)
        best = np.lexsort((cand_p.T, cand_d.T), axis=0)[0]
        chosen = occ_flat[idx[np.arange(emp_flat.size), best]]
        labels[emp_flat] = labels[chosen]

    return DecisionRegionGrid(
        spec=grid_spec,
        decisions=labels.reshape(grid_spec.p_bins, grid_spec.d_bins),
        detector=dataset.detector,
        seed=dataset.seed,
        clamped=clamped,
        config_hash=config_hash,
    )


def classify_batch(power_db: np.ndarray, distortion: np.ndarray, regions: DecisionRegionGrid) -> np.ndarray:
    """Vectorized region lookup; out-of-range measurements clamp to edges."""
    ip, id_, _ = _cell_indices(regions.spec, power_db, distortion)
    return regions.decisions[ip, id_]


def classify(m: Measurement, regions: DecisionRegionGrid) -> Hypothesis:
    """Decide the channel hypothesis for one measurement."""
    return Hypothesis(int(classify_batch(np.array([m.power_db]), np.array([m.distortion]), regions)[0]))


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Decision-versus-truth table: rows decisions, columns truths."""

    counts: np.ndarray  # (4, 4) int64
    freq: np.ndarray    # columns normalized to 1 where the truth occurs

    @classmethod
    def from_counts(cls, counts: np.ndarray) -> "ConfusionMatrix":
        counts = np.asarray(counts, dtype=np.int64)
        col = counts.sum(axis=0, keepdims=True)
        freq = np.divide(counts, col, out=np.zeros(counts.shape), where=col > 0)
        return cls(counts=counts, freq=freq)


def confusion(dataset: Dataset, regions: DecisionRegionGrid) -> ConfusionMatrix:
    """Classify every dataset row and tabulate decisions against truth."""
    dec = classify_batch(dataset.power_db, dataset.distortion, regions)
    counts = np.bincount(dec.astype(np.int64) * 4 + dataset.truth, minlength=16).reshape(4, 4)
    return ConfusionMatrix.from_counts(counts)


# ---------------------------------------------------------------------------
# Scripted timelines.
# ---------------------------------------------------------------------------

_RAMPABLE = ("eta", "dtau_i", "dtheta_i", "jnr")


@dataclass(frozen=True)
class TimelinePhase:
    """One scheduled span of channel behaviour, [start, stop) in epochs.

    ``ramp`` maps parameter names (eta, dtau_i, dtheta_i, jnr) to end
    values: the parameter moves linearly from its base value at the first
    epoch of the span to the end value at the last. The AGC scale is
    recomputed every epoch from the ramped powers.
    """

    start: int
    stop: int
    params: ScenarioParams
    ramp: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.start < 0 or self.stop <= self.start:
            raise ValueError(f"phase span [{self.start}, {self.stop}) is empty or negative")
        bad = set(self.ramp) - set(_RAMPABLE)
        if bad:
            raise ValueError(f"cannot ramp {sorted(bad)}; ramps cover {_RAMPABLE}")

    def at(self, epoch: int) -> ScenarioParams:
        """Scenario parameters in force at an epoch inside the span."""
        if not self.ramp:
            return self.params
        span = self.stop - 1 - self.start
        frac = 0.0 if span == 0 else (epoch - self.start) / span
        changes = {
            name: getattr(self.params, name) + (end - getattr(self.params, name)) * frac
            for name, end in self.ramp.items()
        }
        return replace(self.params, beta=None, **changes)


@dataclass(frozen=True, eq=False)
class TimelineResult:
    """Per-epoch monitor outputs, decisions, and cumulative decision traces."""

    epoch: np.ndarray
    truth: np.ndarray
    power_db: np.ndarray
    distortion: np.ndarray
    decision: np.ndarray
    traces: np.ndarray  # (4, n) cumulative decision counts / n; final values sum to 1


def validate_schedule(schedule: list[TimelinePhase]) -> None:
    """Spans must start at epoch 0 and tile the timeline with no gaps."""
    if not schedule:
        raise ValueError("schedule has no phases")
    if schedule[0].start != 0:
        raise ValueError(f"schedule must start at epoch 0, got {schedule[0].start}")
    for a, b in zip(schedule, schedule[1:]):
        if b.start != a.stop:
            raise ValueError(f"phases must be contiguous: [{a.start}, {a.stop}) then [{b.start}, {b.stop})")


def simulate_timeline(
    schedule: list[TimelinePhase],
    grid: TapGrid,
    detector: str,
    regions: DecisionRegionGrid,
    seed: int,
    power_model: PowerModel | None = None,
    rel_tol: float = 1e-6,
    max_iter: int = 30,
    sd_offset: float | None = None,
) -> TimelineResult:
    """Replay a scheduled interference timeline at one epoch per second.

    Every epoch is simulated, measured, and classified exactly as in
    dataset generation; the single rng stream advances in epoch order, so
    a (schedule, seed) pair always replays identically.
    """
    if detector not in DETECTORS:
        raise ValueError(f"unknown detector {detector!r}, expected one of {DETECTORS}")
    validate_schedule(schedule)
    power_model = power_model if power_model is not None else PowerModel()
    cov = noise_covariance(grid)
    sd_off = default_sd_offset(grid) if sd_offset is None else float(sd_offset)

    n = schedule[-1].stop
    truth = np.empty(n, dtype=np.int8)
    power_db = np.empty(n)
    dist = np.empty(n)
    rng = np.random.default_rng(seed)

    for phase in schedule:
        for k in range(phase.start, phase.stop):
            p = phase.at(k)
            truth[k] = int(p.hypothesis)
            taps = simulate_tap_matrix(p, grid, rng, 1, cov=cov)
            power_db[k] = measure_power(p, power_model, rng)
            if detector == "pdml":
                cfg = MlConfig.for_scenario(p, rel_tol=rel_tol, max_iter=max_iter)
                dist[k] = fit_batch(taps, grid, cov, cfg).cost[0]
            else:
                dist[k] = sd_batch(taps, grid, sd_off)[0]

    decision = classify_batch(power_db, dist, regions)
    traces = np.cumsum(decision[None, :] == np.arange(4)[:, None], axis=1) / n
    return TimelineResult(
        epoch=np.arange(n, dtype=np.int64),
        truth=truth,
        power_db=power_db,
        distortion=dist,
        decision=decision,
        traces=traces,
    )
