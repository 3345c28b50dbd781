"""Config, dataset, region-grid, and schedule persistence.

Every on-disk format carries an explicit version marker plus the
provenance needed to reproduce it (config hash, seed, detector). Floats
are serialized with repr(), which round-trips exactly and produces the
same bytes on every platform, so a fixed (config, seed) pair always
writes identical payloads. Creation timestamps appear only in the region
file's provenance comments and nowhere else.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .bayes import (
    DATASET_COLUMNS,
    DETECTORS,
    ConfusionMatrix,
    CostModel,
    Dataset,
    DecisionGridSpec,
    DecisionRegionGrid,
    HypothesisPriors,
    JammerPrior,
    MonteCarloConfig,
    MultipathPrior,
    SpoofPrior,
    TimelinePhase,
    TimelineResult,
    _RAMPABLE,
    default_cost_base,
    validate_schedule,
)
from .corrsim import Hypothesis, ScenarioParams, noise_from_cn0
from .monitors import PowerModel

DATASET_MAGIC = "# pdml-dataset v1"
REGIONS_MAGIC = "# pdml-regions v1"
CONFUSION_MAGIC = "# pdml-confusion v1"
TRACE_MAGIC = "# pdml-trace v1"

_HYP_NAMES = {h.name: int(h) for h in Hypothesis}


class ConfigError(ValueError):
    """Run configuration file is malformed or fails validation."""


class FileFormatError(ValueError):
    """A dataset, regions, or confusion file violates its format contract."""


class ScheduleError(ValueError):
    """A timeline schedule file is malformed or non-contiguous."""


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# Run configuration.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run settings for the simulate/design/eval/trace chain.

    grid_spec defaults to the detector-matched axes when not given. seed,
    workers, and output_dir identify a particular execution rather than
    the experiment itself and are therefore excluded from config_hash().
    """

    detector: str = "pdml"
    taps: int = 11
    seed: int = 0
    workers: int = 1
    priors: HypothesisPriors = field(default_factory=HypothesisPriors)
    mc: MonteCarloConfig = field(default_factory=MonteCarloConfig)
    cost: CostModel = field(default_factory=CostModel)
    grid_spec: DecisionGridSpec | None = None
    power: PowerModel = field(default_factory=PowerModel)
    rel_tol: float = 1e-6
    max_iter: int = 30
    sd_offset: float | None = None
    output_dir: str = "."

    def __post_init__(self):
        if self.detector not in DETECTORS:
            raise ValueError(f"unknown detector {self.detector!r}, expected one of {DETECTORS}")
        if self.taps < 3 or self.taps % 2 == 0:
            raise ValueError(f"taps must be an odd count >= 3, got {self.taps}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.rel_tol <= 0.0 or self.max_iter < 1:
            raise ValueError("rel_tol must be positive and max_iter >= 1")
        if self.grid_spec is None:
            object.__setattr__(self, "grid_spec", DecisionGridSpec.default_for(self.detector))


def _hash_dict(cfg: RunConfig) -> dict:
    """Canonical experiment identity: everything except seed/workers/paths."""
    return {
        "version": 1,
        "detector": cfg.detector,
        "taps": cfg.taps,
        "priors": {
            "weights": list(cfg.priors.weights),
            "cn0_dbhz": list(cfg.priors.cn0_range),
            "t_accum": cfg.priors.t_accum,
            "multipath": {
                "alpha": list(cfg.priors.h1.alpha_range),
                "delay": list(cfg.priors.h1.delay_range),
            },
            "spoof": {
                "eta": list(cfg.priors.h2.eta_range),
                "offset": list(cfg.priors.h2.offset_range),
            },
            "jammer": {"jnr_db": list(cfg.priors.h3.jnr_db_range)},
        },
        "mc": {"n_p": cfg.mc.n_p, "n_m": cfg.mc.n_m},
        "cost": {
            "base": np.asarray(cfg.cost.base, dtype=float).tolist(),
            "alpha_ref": cfg.cost.alpha_ref,
        },
        "grid": {
            "p_min": cfg.grid_spec.p_min,
            "p_max": cfg.grid_spec.p_max,
            "p_bins": cfg.grid_spec.p_bins,
            "d_min": cfg.grid_spec.d_min,
            "d_max": cfg.grid_spec.d_max,
            "d_bins": cfg.grid_spec.d_bins,
        },
        "power": {"sigma_p_db": cfg.power.sigma_p_db, "t_nominal": cfg.power.t_nominal},
        "ml": {"rel_tol": cfg.rel_tol, "max_iter": cfg.max_iter},
        "sd": {"offset": cfg.sd_offset},
    }


def config_hash(cfg: RunConfig) -> str:
    """sha256 over the canonical JSON form of the experiment settings."""
    blob = json.dumps(_hash_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("ascii")).hexdigest()


def _require_keys(section: str, given: dict, allowed: tuple[str, ...]) -> None:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(unknown)}")


def _pair(section: str, value, name: str) -> tuple[float, float]:
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise ConfigError(f"{section}.{name} must be a [low, high] pair")
    return float(value[0]), float(value[1])


def parse_config(doc: dict, **overrides) -> RunConfig:
    """Build a RunConfig from a parsed JSON document plus CLI overrides.

    Unknown keys anywhere are rejected so typos never silently fall back
    to defaults. overrides (seed, detector, taps, output_dir, workers)
    replace the file's values after parsing.
    """
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    _require_keys(
        "config",
        doc,
        ("version", "detector", "taps", "seed", "workers", "output_dir",
         "mc", "priors", "cost", "grid", "power", "ml", "sd"),
    )
    if doc.get("version") != 1:
        raise ConfigError(f"unsupported config version {doc.get('version')!r}, expected 1")

    try:
        pr = doc.get("priors", {})
        _require_keys("priors", pr, ("weights", "cn0_dbhz", "t_accum", "multipath", "spoof", "jammer"))
        h1 = pr.get("multipath", {})
        _require_keys("priors.multipath", h1, ("alpha", "delay"))
        h2 = pr.get("spoof", {})
        _require_keys("priors.spoof", h2, ("eta", "offset"))
        h3 = pr.get("jammer", {})
        _require_keys("priors.jammer", h3, ("jnr_db",))
        priors = HypothesisPriors(
            weights=tuple(float(w) for w in pr.get("weights", (0.25, 0.25, 0.25, 0.25))),
            h1=MultipathPrior(
                alpha_range=_pair("priors.multipath", h1.get("alpha", (0.05, 0.2)), "alpha"),
                delay_range=_pair("priors.multipath", h1.get("delay", (0.0, 1.2)), "delay"),
            ),
            h2=SpoofPrior(
                eta_range=_pair("priors.spoof", h2.get("eta", (0.6, 4.0)), "eta"),
                offset_range=_pair("priors.spoof", h2.get("offset", (0.0, 1.5)), "offset"),
            ),
            h3=JammerPrior(jnr_db_range=_pair("priors.jammer", h3.get("jnr_db", (3.0, 30.0)), "jnr_db")),
            cn0_range=_pair("priors", pr.get("cn0_dbhz", (40.0, 50.0)), "cn0_dbhz"),
            t_accum=float(pr.get("t_accum", 0.02)),
        )

        mc_doc = doc.get("mc", {})
        _require_keys("mc", mc_doc, ("n_p", "n_m"))
        mc = MonteCarloConfig(n_p=int(mc_doc.get("n_p", 10_000)), n_m=int(mc_doc.get("n_m", 20)))

        cost_doc = doc.get("cost", {})
        _require_keys("cost", cost_doc, ("base", "alpha_ref"))
        base = cost_doc.get("base")
        cost = CostModel(
            base=default_cost_base() if base is None else np.asarray(base, dtype=float),
            alpha_ref=float(cost_doc.get("alpha_ref", 0.8)),
        )

        power_doc = doc.get("power", {})
        _require_keys("power", power_doc, ("sigma_p_db", "t_nominal"))
        power = PowerModel(
            sigma_p_db=float(power_doc.get("sigma_p_db", 0.1)),
            t_nominal=float(power_doc.get("t_nominal", 0.02)),
        )

        ml_doc = doc.get("ml", {})
        _require_keys("ml", ml_doc, ("rel_tol", "max_iter"))
        sd_doc = doc.get("sd", {})
        _require_keys("sd", sd_doc, ("offset",))
        sd_offset = sd_doc.get("offset")

        detector = str(overrides.get("detector") or doc.get("detector", "pdml"))

        grid_doc = doc.get("grid", {})
        _require_keys("grid", grid_doc, ("p_min", "p_max", "p_bins", "d_min", "d_max", "d_bins"))
        base_spec = DecisionGridSpec.default_for(detector)
        grid_spec = DecisionGridSpec(
            p_min=float(grid_doc.get("p_min", base_spec.p_min)),
            p_max=float(grid_doc.get("p_max", base_spec.p_max)),
            p_bins=int(grid_doc.get("p_bins", base_spec.p_bins)),
            d_min=float(grid_doc.get("d_min", base_spec.d_min)),
            d_max=float(grid_doc.get("d_max", base_spec.d_max)),
            d_bins=int(grid_doc.get("d_bins", base_spec.d_bins)),
        )

        return RunConfig(
            detector=detector,
            taps=int(overrides.get("taps") or doc.get("taps", 11)),
            seed=int(overrides["seed"]) if overrides.get("seed") is not None else int(doc.get("seed", 0)),
            workers=int(overrides.get("workers") or doc.get("workers", 1)),
            priors=priors,
            mc=mc,
            cost=cost,
            grid_spec=grid_spec,
            power=power,
            rel_tol=float(ml_doc.get("rel_tol", 1e-6)),
            max_iter=int(ml_doc.get("max_iter", 30)),
            sd_offset=None if sd_offset is None else float(sd_offset),
            output_dir=str(overrides.get("output_dir") or doc.get("output_dir", ".")),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str, **overrides) -> RunConfig:
    """Read and validate a JSON run configuration.

    A minimal file is ``{"version": 1}``; every section falls back to the
    defaults documented in the README.
    """
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: not valid JSON: {exc.msg}") from exc
    try:
        return parse_config(doc, **overrides)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Dataset CSV.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetMeta:
    """Provenance read back from a dataset file's comment header."""

    config_sha256: str
    grid_spec: DecisionGridSpec


def _axis_lines(spec: DecisionGridSpec) -> list[str]:
    return [
        f"# p_axis={_fmt(spec.p_min)},{_fmt(spec.p_max)},{spec.p_bins}",
        f"# d_axis={_fmt(spec.d_min)},{_fmt(spec.d_max)},{spec.d_bins}",
    ]


def _parse_axes(meta: dict, where: str) -> DecisionGridSpec:
    try:
        p = meta["p_axis"].split(",")
        d = meta["d_axis"].split(",")
        return DecisionGridSpec(
            p_min=float(p[0]), p_max=float(p[1]), p_bins=int(p[2]),
            d_min=float(d[0]), d_max=float(d[1]), d_bins=int(d[2]),
        )
    except (KeyError, IndexError, ValueError) as exc:
        raise FileFormatError(f"{where}: bad or missing axis provenance: {exc}") from exc


def write_dataset(ds: Dataset, path: str, cfg_hash: str, grid_spec: DecisionGridSpec) -> None:
    """Write one CSV row per measurement epoch, provenance in # comments."""
    lines = [
        DATASET_MAGIC,
        f"# config_sha256={cfg_hash}",
        f"# seed={ds.seed}",
        f"# detector={ds.detector}",
        f"# taps={ds.taps}",
        f"# n_p={ds.n_p}",
        f"# n_m={ds.n_m}",
        *_axis_lines(grid_spec),
        ",".join(DATASET_COLUMNS),
    ]
    cols = (ds.power_db, ds.distortion, ds.eta, ds.dtau_i, ds.dtheta_i,
            ds.alpha, ds.delay, ds.jnr, ds.cn0_dbhz)
    for k in range(len(ds)):
        vals = ",".join(_fmt(c[k]) for c in cols)
        lines.append(f"{int(ds.epoch[k])},H{int(ds.truth[k])},{vals}")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _comment_meta(lines: list[str], path: str) -> tuple[dict, int]:
    """Parse leading '# key=value' comments; returns (meta, first data index)."""
    meta: dict[str, str] = {}
    i = 1  # line 0 is the magic
    while i < len(lines) and lines[i].startswith("#"):
        body = lines[i][1:].strip()
        if "=" not in body:
            raise FileFormatError(f"{path}:{i + 1}: comment is not key=value: {lines[i]!r}")
        key, _, value = body.partition("=")
        meta[key.strip()] = value.strip()
        i += 1
    return meta, i


def read_dataset(path: str) -> tuple[Dataset, DatasetMeta]:
    """Parse a dataset CSV; format violations name the offending line."""
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != DATASET_MAGIC:
        raise FileFormatError(f"{path}:1: expected {DATASET_MAGIC!r} version marker")
    meta, i = _comment_meta(lines, path)
    if i >= len(lines) or lines[i] != ",".join(DATASET_COLUMNS):
        raise FileFormatError(f"{path}:{i + 1}: header must be {','.join(DATASET_COLUMNS)}")
    rows = lines[i + 1:]
    if rows and rows[-1] == "":
        rows.pop()
    if not rows:
        raise FileFormatError(f"{path}: dataset has no data rows")

    n = len(rows)
    epoch = np.empty(n, dtype=np.int64)
    truth = np.empty(n, dtype=np.int8)
    floats = np.empty((n, 9))
    for k, row in enumerate(rows):
        parts = row.split(",")
        if len(parts) != len(DATASET_COLUMNS):
            raise FileFormatError(
                f"{path}:{i + 2 + k}: expected {len(DATASET_COLUMNS)} fields, got {len(parts)}")
        try:
            epoch[k] = int(parts[0])
            truth[k] = _HYP_NAMES[parts[1]]
            floats[k] = [float(v) for v in parts[2:]]
        except (KeyError, ValueError) as exc:
            raise FileFormatError(f"{path}:{i + 2 + k}: {exc}") from exc

    try:
        n_p = int(meta["n_p"])
        n_m = int(meta["n_m"])
        seed = int(meta["seed"])
        detector = meta["detector"]
        taps = int(meta["taps"])
    except (KeyError, ValueError) as exc:
        raise FileFormatError(f"{path}: bad or missing provenance comment: {exc}") from exc
    if n_p * n_m != n:
        raise FileFormatError(f"{path}: provenance says {n_p}x{n_m} rows, file has {n}")

    ds = Dataset(
        detector=detector, taps=taps, n_p=n_p, n_m=n_m, seed=seed,
        epoch=epoch, truth=truth,
        power_db=floats[:, 0].copy(), distortion=floats[:, 1].copy(),
        eta=floats[:, 2].copy(), dtau_i=floats[:, 3].copy(), dtheta_i=floats[:, 4].copy(),
        alpha=floats[:, 5].copy(), delay=floats[:, 6].copy(), jnr=floats[:, 7].copy(),
        cn0_dbhz=floats[:, 8].copy(),
    )
    return ds, DatasetMeta(config_sha256=meta.get("config_sha256", ""),
                           grid_spec=_parse_axes(meta, path))


# ---------------------------------------------------------------------------
# Decision-region file.
# ---------------------------------------------------------------------------


def write_regions(regions: DecisionRegionGrid, path: str, created_utc: str | None = None) -> None:
    """Write the labeled decision plane as digit rows.

    One line per power bin (lowest power first); each character is the
    decided hypothesis index for one distortion bin (lowest first). The
    creation timestamp lives only here, in provenance, so payload
    comparisons can drop this single line.
    """
    if created_utc is None:
        created_utc = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    spec = regions.spec
    lines = [
        REGIONS_MAGIC,
        f"# config_sha256={regions.config_hash}",
        f"# seed={regions.seed}",
        f"# detector={regions.detector}",
        f"# clamped={regions.clamped}",
        f"# created_utc={created_utc}",
        *_axis_lines(spec),
    ]
    digits = regions.decisions.astype(np.uint8) + ord("0")
    lines.extend(bytes(row).decode("ascii") for row in digits)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_regions(path: str) -> DecisionRegionGrid:
    """Load a region file, validating version, shape, and label charset."""
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != REGIONS_MAGIC:
        raise FileFormatError(f"{path}:1: expected {REGIONS_MAGIC!r} version marker")
    meta, i = _comment_meta(lines, path)
    spec = _parse_axes(meta, path)
    rows = lines[i:]
    if rows and rows[-1] == "":
        rows.pop()
    if len(rows) != spec.p_bins:
        raise FileFormatError(f"{path}: expected {spec.p_bins} cell rows, found {len(rows)}")
    decisions = np.empty((spec.p_bins, spec.d_bins), dtype=np.int8)
    for r, row in enumerate(rows):
        if len(row) != spec.d_bins or not set(row) <= set("0123"):
            raise FileFormatError(
                f"{path}:{i + 1 + r}: cell row must be {spec.d_bins} digits from 0-3")
        decisions[r] = np.frombuffer(row.encode("ascii"), dtype=np.uint8) - ord("0")
    return DecisionRegionGrid(
        spec=spec,
        decisions=decisions,
        detector=meta.get("detector", "pdml"),
        seed=int(meta.get("seed", 0)),
        clamped=int(meta.get("clamped", 0)),
        config_hash=meta.get("config_sha256", ""),
    )


# ---------------------------------------------------------------------------
# Confusion matrix and timeline trace CSV.
# ---------------------------------------------------------------------------


def write_confusion(conf: ConfusionMatrix, path: str, cfg_hash: str, detector: str) -> None:
    """4x4 relative-frequency table: rows decisions, columns truths."""
    lines = [
        CONFUSION_MAGIC,
        f"# config_sha256={cfg_hash}",
        f"# detector={detector}",
        "decision," + ",".join(h.name for h in Hypothesis),
    ]
    for i in range(4):
        lines.append(f"H{i}," + ",".join(_fmt(conf.freq[i, j]) for j in range(4)))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def summary_lines(conf: ConfusionMatrix) -> list[str]:
    """Per-hypothesis detection and false-alarm rates from the counts."""
    out = []
    total = conf.counts.sum(axis=0)
    for i in range(4):
        others = int(total.sum() - total[i])
        fa = float(conf.counts[i].sum() - conf.counts[i, i]) / others if others else 0.0
        out.append(
            f"H{i}: detection={conf.freq[i, i]:.4f} false_alarm={fa:.4f} truth_count={int(total[i])}")
    return out


def write_trace(result: TimelineResult, path: str, cfg_hash: str, seed: int, detector: str) -> None:
    """Per-epoch timeline CSV: truth phase, monitor outputs, decision."""
    lines = [
        TRACE_MAGIC,
        f"# config_sha256={cfg_hash}",
        f"# seed={seed}",
        f"# detector={detector}",
        "epoch,truth,power_db,distortion,decision",
    ]
    for k in range(result.epoch.size):
        lines.append(
            f"{int(result.epoch[k])},H{int(result.truth[k])},"
            f"{_fmt(result.power_db[k])},{_fmt(result.distortion[k])},H{int(result.decision[k])}")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Timeline schedules.
# ---------------------------------------------------------------------------

_PARAM_KEYS = ("cn0_dbhz", "t_accum", "p_auth", "dtau_a", "dtheta_a",
               "eta", "dtau_i", "dtheta_i", "jnr")


def read_schedule(path: str) -> list[TimelinePhase]:
    """Load a JSON timeline schedule into contiguous phases.

    Each phase is {start, stop, hypothesis, params, ramp}. params uses
    linear power ratios (eta, jnr) and chips/radians for offsets, with
    cn0_dbhz (default 45) fixing the noise level; ramp maps a parameter
    name to its value at the final epoch of the span.
    """
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScheduleError(f"{path}:{exc.lineno}: not valid JSON: {exc.msg}") from exc
    if not isinstance(doc, dict) or doc.get("version") != 1:
        raise ScheduleError(f"{path}: unsupported schedule version {doc.get('version')!r}, expected 1")
    phases_doc = doc.get("phases")
    if not isinstance(phases_doc, list) or not phases_doc:
        raise ScheduleError(f"{path}: schedule needs a non-empty 'phases' list")

    phases: list[TimelinePhase] = []
    for k, ph in enumerate(phases_doc):
        where = f"{path}: phase {k}"
        if not isinstance(ph, dict):
            raise ScheduleError(f"{where}: must be an object")
        unknown = sorted(set(ph) - {"start", "stop", "hypothesis", "params", "ramp"})
        if unknown:
            raise ScheduleError(f"{where}: unknown key(s): {', '.join(unknown)}")
        try:
            start, stop = int(ph["start"]), int(ph["stop"])
            hyp = _HYP_NAMES[ph["hypothesis"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ScheduleError(f"{where}: needs integer start/stop and hypothesis H0-H3 ({exc})") from exc

        raw = ph.get("params", {})
        bad = sorted(set(raw) - set(_PARAM_KEYS))
        if bad:
            raise ScheduleError(f"{where}: unknown param(s): {', '.join(bad)}")
        ramp = ph.get("ramp", {})
        bad = sorted(set(ramp) - set(_RAMPABLE))
        if bad:
            raise ScheduleError(f"{where}: only {', '.join(_RAMPABLE)} can ramp, got {', '.join(bad)}")

        try:
            noise = noise_from_cn0(
                float(raw.get("cn0_dbhz", 45.0)),
                t_accum=float(raw.get("t_accum", 0.02)),
                p_auth=float(raw.get("p_auth", 1.0)),
            )
            params = ScenarioParams(
                hypothesis=Hypothesis(hyp),
                noise=noise,
                p_auth=float(raw.get("p_auth", 1.0)),
                dtau_a=float(raw.get("dtau_a", 0.0)),
                dtheta_a=float(raw.get("dtheta_a", 0.0)),
                eta=float(raw.get("eta", 0.0)),
                dtau_i=float(raw.get("dtau_i", 0.0)),
                dtheta_i=float(raw.get("dtheta_i", 0.0)),
                jnr=float(raw.get("jnr", 0.0)),
            )
            phases.append(TimelinePhase(
                start=start, stop=stop, params=params,
                ramp={k2: float(v) for k2, v in ramp.items()},
            ))
        except (TypeError, ValueError) as exc:
            raise ScheduleError(f"{where}: {exc}") from exc

    try:
        validate_schedule(phases)
    except ValueError as exc:
        raise ScheduleError(f"{path}: {exc}") from exc
    return phases
