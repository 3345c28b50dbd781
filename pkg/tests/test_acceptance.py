"""Release gates for the classification pipeline, one test per gate.

`pytest -v tests/test_acceptance.py` prints a pass/fail line per gate; the
measured numbers behind each verdict are printed, so add ``-s`` (or read a
failure report) to see them. The full-scale gates share three module-scoped
pipeline runs and together take a few minutes on one core.
"""

import json
import pathlib
import time
from typing import NamedTuple

import numpy as np
import pytest

from pdml import files
from pdml.bayes import (
    ConfusionMatrix,
    CostModel,
    DecisionGridSpec,
    DecisionRegionGrid,
    HypothesisPriors,
    MonteCarloConfig,
    confusion,
    design_regions,
    generate_dataset,
    simulate_timeline,
)
from pdml.cli import main
from pdml.corrsim import (
    Hypothesis,
    ScenarioParams,
    TapVector,
    make_tap_grid,
    noise_covariance,
    noise_from_cn0,
    simulate_tap_matrix,
)
from pdml.mle import MlConfig, coarse_search, fit_batch

SEED_DESIGN = 101
SEED_VALID = 202
FULL_SCALE = MonteCarloConfig(n_p=10_000, n_m=20)
SCHEDULE_DIR = pathlib.Path(__file__).resolve().parent.parent / "scripts" / "schedules"


class Pipeline(NamedTuple):
    detector: str
    taps: int
    regions: DecisionRegionGrid
    conf: ConfusionMatrix
    elapsed: float


def run_pipeline(detector: str, taps: int) -> Pipeline:
    """Design regions on one full-scale dataset, score them on a fresh one."""
    t0 = time.perf_counter()
    grid = make_tap_grid(taps)
    priors = HypothesisPriors()
    design_ds = generate_dataset(priors, FULL_SCALE, grid, detector, seed=SEED_DESIGN)
    valid_ds = generate_dataset(priors, FULL_SCALE, grid, detector, seed=SEED_VALID)
    regions = design_regions(design_ds, DecisionGridSpec.default_for(detector), CostModel())
    conf = confusion(valid_ds, regions)
    return Pipeline(detector, taps, regions, conf, time.perf_counter() - t0)


@pytest.fixture(scope="module")
def ml_pipeline():
    return run_pipeline("pdml", 11)


@pytest.fixture(scope="module")
def sd_pipeline():
    return run_pipeline("sd", 11)


@pytest.fixture(scope="module")
def low_tap_pipeline():
    return run_pipeline("pdml", 5)


def test_gate1_noiseless_fits_are_exact():
    """1000 random clean scenarios: distortion < 1e-8, code phase to 1e-4."""
    rng = np.random.default_rng(11)
    grid = make_tap_grid(11)
    cov = noise_covariance(grid)
    n = 1000
    tau = rng.uniform(-0.4, 0.4, n)
    amp = rng.uniform(0.5, 2.0, n) * np.exp(1j * rng.uniform(-np.pi, np.pi, n))
    vals = amp[:, None] * np.maximum(0.0, 1.0 - np.abs(grid.offsets[None, :] - tau[:, None]))
    config = MlConfig(sigma_sq=noise_from_cn0(45.0).sigma_n_sq, beta=1.0)

    t0 = time.perf_counter()
    fit = fit_batch(vals.astype(complex), grid, cov, config)
    elapsed = time.perf_counter() - t0

    worst_d = float(fit.cost.max())
    worst_tau = float(np.abs(fit.code_phase - tau).max())
    print(f"gate1: max distortion {worst_d:.3e}, max code-phase error "
          f"{worst_tau:.3e} chips, {elapsed:.2f} s")
    assert worst_d < 1e-8
    assert worst_tau < 1e-4
    assert elapsed < 5.0


def test_gate2_clean_distortion_mean_matches_residual_dof():
    """Mean normalized distortion under clean conditions is 2l-3 within 10%."""
    grid = make_tap_grid(11)
    cov = noise_covariance(grid)
    params = ScenarioParams(hypothesis=Hypothesis.H0, noise=noise_from_cn0(45.0))
    config = MlConfig.for_scenario(params)
    rng = np.random.default_rng(21)

    t0 = time.perf_counter()
    taps = simulate_tap_matrix(params, grid, rng, 10_000, cov=cov)
    fit = fit_batch(taps, grid, cov, config)
    elapsed = time.perf_counter() - t0

    mean_d = float(fit.cost.mean())
    dof = 2 * grid.l - 3
    print(f"gate2: mean distortion {mean_d:.3f}, target {dof} +-10%, {elapsed:.2f} s")
    assert 0.9 * dof <= mean_d <= 1.1 * dof
    assert elapsed < 30.0


def test_gate3_refinement_matches_dense_grid_oracle():
    """Refined fits agree with an exhaustive 1e-4-step code-phase scan.

    100 noisy clean-channel instances with random tracking offsets. Where
    the scan's global minimizer lies between the two coarse candidates the
    refined answer must match it; instances whose scan minimizer escapes
    that bracket are the documented local-minimum caveat of an unwidened
    bracket, and are counted, printed, and bounded below 2%.
    """
    rng = np.random.default_rng(33)
    grid = make_tap_grid(11)
    cov = noise_covariance(grid)
    noise = noise_from_cn0(45.0)
    scenarios = [
        ScenarioParams(hypothesis=Hypothesis.H0, noise=noise,
                       dtau_a=rng.uniform(-0.4, 0.4), dtheta_a=rng.uniform(-np.pi, np.pi))
        for _ in range(100)
    ]

    # Independent oracle: J(tau) = x^H Q^-1 x - |h^T Q^-1 x|^2 / h^T Q^-1 h
    # through an explicit inverse, evaluated on a 1e-4-step lag sweep.
    q_inv = np.linalg.inv(np.maximum(0.0, 1.0 - np.abs(
        grid.offsets[:, None] - grid.offsets[None, :])))
    taus = np.arange(-1.0, 1.0 + 1e-4, 1e-4)
    h_all = np.maximum(0.0, 1.0 - np.abs(grid.offsets[None, :] - taus[:, None]))
    hq = h_all @ q_inv
    gain = np.einsum("tl,tl->t", hq, h_all)
    live = gain > 1e-12

    escaped = 0
    worst_tau = 0.0
    for k, params in enumerate(scenarios):
        config = MlConfig.for_scenario(params)
        vals = simulate_tap_matrix(params, grid, np.random.default_rng(1000 + k), 1, cov=cov)[0]
        fit = fit_batch(vals[None, :], grid, cov, config)
        d = float(fit.cost[0])

        base = float(np.real(np.conj(vals) @ q_inv @ vals))
        num = hq @ vals
        profile = np.full(taus.size, base)
        profile[live] -= np.abs(num[live]) ** 2 / gain[live]
        profile *= config.cost_scale
        best = int(np.argmin(profile))

        pair = coarse_search(TapVector(values=vals, grid=grid), cov, config)
        lo = min(pair[0][0], pair[1][0]) - 1e-12
        hi = max(pair[0][0], pair[1][0]) + 1e-12
        if not lo <= taus[best] <= hi:
            escaped += 1
            print(f"gate3: instance {k} scan minimizer {taus[best]:.4f} "
                  f"outside bracket [{lo:.1f}, {hi:.1f}]")
            continue

        worst_tau = max(worst_tau, abs(float(fit.code_phase[0]) - taus[best]))
        assert abs(fit.code_phase[0] - taus[best]) <= 2e-4, k
        # The scan overshoots the true minimum by up to the half-step
        # curvature term; allow that much below the scan's best value.
        bl, br = max(best - 1, 0), min(best + 1, taus.size - 1)
        disc = max(profile[bl] + profile[br] - 2 * profile[best], 0.0) / 4
        assert d <= profile[best] * (1.0 + 1e-6) + 1e-15, k
        assert d >= profile[best] - disc - 1e-9 * abs(profile[best]), k

    print(f"gate3: {escaped}/100 outside-bracket (<2%), worst in-bracket "
          f"code-phase gap {worst_tau:.2e} chips")
    assert escaped / 100 < 0.02


def test_gate4_jamming_looks_like_clean_distortion():
    """Median distortion under jamming stays within 25% of the clean median."""
    grid = make_tap_grid(11)
    mc = MonteCarloConfig(n_p=500, n_m=20)
    clean = generate_dataset(
        HypothesisPriors(weights=(1.0, 0.0, 0.0, 0.0)), mc, grid, "pdml", seed=41)
    jammed = generate_dataset(
        HypothesisPriors(weights=(0.0, 0.0, 0.0, 1.0)), mc, grid, "pdml", seed=41)
    ratio = float(np.median(jammed.distortion) / np.median(clean.distortion))
    print(f"gate4: median distortion ratio jammed/clean = {ratio:.4f}")
    assert 0.8 <= ratio <= 1.25


def test_gate5_full_scale_confusion_meets_floors(ml_pipeline):
    """10^4 x 20 epochs, 11 taps: per-class rates clear their floors."""
    freq = ml_pipeline.conf.freq
    print(f"gate5: H0->H0 {freq[0, 0]:.4f} (>=0.97), H2->H2 {freq[2, 2]:.4f} (>=0.75), "
          f"H3->H3 {freq[3, 3]:.4f} (>=0.93), H1->H0 {freq[0, 1]:.4f} (>=0.60), "
          f"pipeline {ml_pipeline.elapsed:.0f} s")
    assert freq[0, 0] >= 0.97
    assert freq[2, 2] >= 0.75
    assert freq[3, 3] >= 0.93
    assert freq[0, 1] >= 0.60
    assert ml_pipeline.elapsed < 600.0


def test_gate6_ml_fit_beats_symmetric_difference(ml_pipeline, sd_pipeline):
    """The ML detector confuses spoofing with jamming less than SD does."""
    ml, sd = ml_pipeline.conf.freq, sd_pipeline.conf.freq
    ml_escalated = ml[2, 1] + ml[3, 1]
    sd_escalated = sd[2, 1] + sd[3, 1]
    print(f"gate6: P(H3|H2) sd {sd[3, 2]:.4f} > ml {ml[3, 2]:.4f}; "
          f"P(attack|H1) ml {ml_escalated:.4f} <= sd {sd_escalated:.4f}")
    assert sd[3, 2] > ml[3, 2]
    assert ml_escalated <= sd_escalated


def test_gate7_scripted_timelines_settle_on_the_attacker(ml_pipeline):
    """Jamming onset and spoofing pull-off replays call the right class."""
    grid = make_tap_grid(11)

    jam = files.read_schedule(str(SCHEDULE_DIR / "jamming_onset.json"))
    res = simulate_timeline(jam, grid, "pdml", ml_pipeline.regions, seed=71)
    onset = next(p.start for p in jam if p.params.hypothesis is Hypothesis.H3)
    jam_share = float(np.mean(res.decision[onset:] == Hypothesis.H3))

    pull = files.read_schedule(str(SCHEDULE_DIR / "spoof_pulloff.json"))
    res = simulate_timeline(pull, grid, "pdml", ml_pipeline.regions, seed=72)
    attack = next(p for p in pull if p.params.hypothesis is Hypothesis.H2)
    third = attack.stop - (attack.stop - attack.start) // 3
    tail = res.decision[third:attack.stop]
    spoof_share = float(np.mean(tail == Hypothesis.H2))
    false_jam = float(np.mean(tail == Hypothesis.H3))

    print(f"gate7: post-onset H3 share {jam_share:.4f} (>=0.95); final-third "
          f"H2 share {spoof_share:.4f} (>=0.95), H3 share {false_jam:.4f} (<0.05)")
    assert jam_share >= 0.95
    assert spoof_share >= 0.95
    assert false_jam < 0.05


def test_gate8_cli_chain_is_byte_deterministic(tmp_path):
    """simulate/design/eval payloads repeat exactly, whatever the thread count."""
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps({
        "version": 1, "detector": "pdml", "taps": 11, "seed": 5,
        "mc": {"n_p": 250, "n_m": 4},
    }))

    def run(out, workers):
        argv = ["simulate", "--config", str(cfg_path), "--out", out]
        if workers is not None:
            argv += ["--workers", str(workers)]
        assert main(argv) == 0
        assert main(["design", "--config", str(cfg_path),
                     "--dataset", f"{out}/dataset.csv", "--out", out]) == 0
        assert main(["eval", "--regions", f"{out}/regions.txt",
                     "--dataset", f"{out}/dataset.csv", "--out", out]) == 0

    for name, workers in (("one", None), ("two", None), ("threaded", 4)):
        run(str(tmp_path / name), workers)

    def payload(name):
        out = tmp_path / name
        regions = b"".join(
            ln for ln in (out / "regions.txt").read_bytes().splitlines(keepends=True)
            if not ln.startswith(b"# created_utc="))
        return ((out / "dataset.csv").read_bytes(), regions,
                (out / "confusion.csv").read_bytes(), (out / "eval_summary.txt").read_bytes())

    first, second, threaded = payload("one"), payload("two"), payload("threaded")
    print("gate8: dataset/regions/confusion/summary identical across reruns and workers")
    assert first == second
    assert first == threaded


def test_gate9_fewer_taps_degrade_spoof_detection(ml_pipeline, low_tap_pipeline):
    """5 taps catch strictly less spoofing than 11 under identical seeds."""
    full = float(ml_pipeline.conf.freq[2, 2])
    low = float(low_tap_pipeline.conf.freq[2, 2])
    print(f"gate9: H2->H2 at 5 taps {low:.4f} < at 11 taps {full:.4f}")
    assert low < full
