"""Run configuration, dataset/region/confusion/trace files, and schedules."""

import json
import pathlib

import numpy as np
import pytest

from pdml.bayes import (
    ConfusionMatrix,
    DecisionGridSpec,
    DecisionRegionGrid,
    HypothesisPriors,
    MonteCarloConfig,
    TimelineResult,
    generate_dataset,
)
from pdml.corrsim import Hypothesis, make_tap_grid
from pdml.files import (
    ConfigError,
    FileFormatError,
    RunConfig,
    ScheduleError,
    config_hash,
    load_config,
    parse_config,
    read_dataset,
    read_regions,
    read_schedule,
    summary_lines,
    write_confusion,
    write_dataset,
    write_regions,
    write_trace,
)


def small_dataset(detector="pdml", seed=5):
    return generate_dataset(
        HypothesisPriors(), MonteCarloConfig(n_p=12, n_m=3), make_tap_grid(5), detector, seed=seed
    )


# -- Configuration ------------------------------------------------------------


def test_minimal_config_is_all_defaults():
    cfg = parse_config({"version": 1})
    assert cfg.detector == "pdml"
    assert cfg.taps == 11
    assert cfg.seed == 0
    assert cfg.workers == 1
    assert cfg.priors.h1.alpha_range == (0.05, 0.2)
    assert cfg.priors.h2.eta_range == (0.6, 4.0)
    assert cfg.power.sigma_p_db == 0.1
    assert cfg.mc.n_p == 10_000 and cfg.mc.n_m == 20
    assert cfg.grid_spec == DecisionGridSpec()
    assert cfg.sd_offset is None


def test_config_requires_version_1():
    with pytest.raises(ConfigError):
        parse_config({})
    with pytest.raises(ConfigError):
        parse_config({"version": 2})
    with pytest.raises(ConfigError):
        parse_config([1, 2])


def test_config_rejects_unknown_keys_everywhere():
    with pytest.raises(ConfigError, match="detectr"):
        parse_config({"version": 1, "detectr": "sd"})
    with pytest.raises(ConfigError, match="gamma"):
        parse_config({"version": 1, "priors": {"multipath": {"gamma": 1}}})
    with pytest.raises(ConfigError, match="bins"):
        parse_config({"version": 1, "grid": {"bins": 100}})
    with pytest.raises(ConfigError, match="sigma"):
        parse_config({"version": 1, "power": {"sigma": 0.1}})


def test_config_overrides_beat_file_values():
    doc = {"version": 1, "detector": "pdml", "taps": 11, "seed": 9}
    cfg = parse_config(doc, detector="sd", taps=5, seed=0, workers=4)
    assert cfg.detector == "sd"
    assert cfg.taps == 5
    assert cfg.seed == 0          # explicit zero must not fall through to 9
    assert cfg.workers == 4
    # detector override also flips the default distortion axis
    assert (cfg.grid_spec.d_min, cfg.grid_spec.d_max) == (-4.0, 1.0)


def test_config_sd_detector_default_axes():
    cfg = parse_config({"version": 1, "detector": "sd"})
    assert (cfg.grid_spec.d_min, cfg.grid_spec.d_max) == (-4.0, 1.0)
    # explicit axes still win
    cfg = parse_config({"version": 1, "detector": "sd", "grid": {"d_min": -2.0}})
    assert cfg.grid_spec.d_min == -2.0


def test_config_validation_propagates():
    with pytest.raises(ConfigError):
        parse_config({"version": 1, "taps": 10})
    with pytest.raises(ConfigError):
        parse_config({"version": 1, "detector": "fancy"})
    with pytest.raises(ConfigError):
        parse_config({"version": 1, "priors": {"weights": [1, 1, 1, 1]}})
    with pytest.raises(ConfigError):
        parse_config({"version": 1, "cost": {"base": [[1]]}})


def test_config_hash_tracks_experiment_not_execution():
    base = parse_config({"version": 1})
    h = config_hash(base)
    assert len(h) == 64 and set(h) <= set("0123456789abcdef")
    assert config_hash(parse_config({"version": 1, "seed": 99, "workers": 8, "output_dir": "/x"})) == h
    assert config_hash(parse_config({"version": 1, "taps": 5})) != h
    assert config_hash(parse_config({"version": 1, "power": {"sigma_p_db": 0.2}})) != h
    assert config_hash(parse_config({"version": 1, "detector": "sd"})) != h


def test_load_config_reports_json_errors(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"version": 1,\n  "taps": }\n')
    with pytest.raises(ConfigError, match=r"bad\.json:2"):
        load_config(str(p))


def test_run_config_direct_validation():
    with pytest.raises(ValueError):
        RunConfig(taps=4)
    with pytest.raises(ValueError):
        RunConfig(workers=0)
    with pytest.raises(ValueError):
        RunConfig(rel_tol=0.0)
    assert RunConfig(detector="sd").grid_spec.d_min == -4.0


# -- Dataset CSV ---------------------------------------------------------------


def test_dataset_roundtrip_is_lossless(tmp_path):
    ds = small_dataset()
    path = tmp_path / "dataset.csv"
    spec = DecisionGridSpec.default_for(ds.detector)
    write_dataset(ds, str(path), "cafe" * 16, spec)
    back, meta = read_dataset(str(path))
    assert meta.config_sha256 == "cafe" * 16
    assert meta.grid_spec == spec
    assert (back.detector, back.taps, back.n_p, back.n_m, back.seed) == ("pdml", 5, 12, 3, 5)
    for name in ("epoch", "truth", "power_db", "distortion", "eta", "dtau_i",
                 "dtheta_i", "alpha", "delay", "jnr", "cn0_dbhz"):
        assert np.array_equal(getattr(ds, name), getattr(back, name)), name


def test_dataset_rewrite_is_byte_identical(tmp_path):
    ds = small_dataset()
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    spec = DecisionGridSpec.default_for(ds.detector)
    write_dataset(ds, str(a), "x", spec)
    write_dataset(ds, str(b), "x", spec)
    assert a.read_bytes() == b.read_bytes()


def dataset_lines(tmp_path):
    ds = small_dataset()
    path = tmp_path / "ds.csv"
    write_dataset(ds, str(path), "h", DecisionGridSpec.default_for("pdml"))
    return path, path.read_text().splitlines()


def test_dataset_parse_errors_name_the_line(tmp_path):
    path, lines = dataset_lines(tmp_path)

    bad = list(lines)
    bad[0] = "# other-format v1"
    path.write_text("\n".join(bad) + "\n")
    with pytest.raises(FileFormatError, match=":1:"):
        read_dataset(str(path))

    bad = list(lines)
    first_data = next(i for i, ln in enumerate(bad) if ln.startswith("epoch")) + 1
    bad[first_data + 2] = bad[first_data + 2].rsplit(",", 1)[0]  # drop a field
    path.write_text("\n".join(bad) + "\n")
    with pytest.raises(FileFormatError, match=f":{first_data + 3}:"):
        read_dataset(str(path))

    bad = list(lines)
    bad[first_data] = bad[first_data].replace("H", "H9", 1)
    path.write_text("\n".join(bad) + "\n")
    with pytest.raises(FileFormatError, match=f":{first_data + 1}:"):
        read_dataset(str(path))

    bad = list(lines)
    bad[first_data - 1] = "wrong,header,line"
    path.write_text("\n".join(bad) + "\n")
    with pytest.raises(FileFormatError, match="header"):
        read_dataset(str(path))

    bad = [ln if not ln.startswith("# n_p=") else "# n_p=999" for ln in lines]
    path.write_text("\n".join(bad) + "\n")
    with pytest.raises(FileFormatError, match="999"):
        read_dataset(str(path))


def test_dataset_requires_rows(tmp_path):
    path, lines = dataset_lines(tmp_path)
    header_end = next(i for i, ln in enumerate(lines) if ln.startswith("epoch")) + 1
    path.write_text("\n".join(lines[:header_end]) + "\n")
    with pytest.raises(FileFormatError, match="no data rows"):
        read_dataset(str(path))


# -- Region file ----------------------------------------------------------------


def region_fixture():
    rng = np.random.default_rng(2)
    spec = DecisionGridSpec(p_min=-2.0, p_max=2.0, p_bins=7, d_min=0.0, d_max=3.0, d_bins=9)
    return DecisionRegionGrid(
        spec=spec,
        decisions=rng.integers(0, 4, size=(7, 9)).astype(np.int8),
        detector="sd",
        seed=17,
        clamped=3,
        config_hash="beef" * 16,
    )


def test_regions_roundtrip(tmp_path):
    regions = region_fixture()
    path = tmp_path / "regions.txt"
    write_regions(regions, str(path), created_utc="2026-01-02T03:04:05Z")
    assert "# created_utc=2026-01-02T03:04:05Z" in path.read_text().splitlines()
    back = read_regions(str(path))
    assert back.spec == regions.spec
    assert np.array_equal(back.decisions, regions.decisions)
    assert (back.detector, back.seed, back.clamped) == ("sd", 17, 3)
    assert back.config_hash == "beef" * 16


def test_regions_timestamp_is_the_only_varying_line(tmp_path):
    regions = region_fixture()
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    write_regions(regions, str(a), created_utc="2026-01-01T00:00:00Z")
    write_regions(regions, str(b), created_utc="2027-12-31T23:59:59Z")
    la = [ln for ln in a.read_text().splitlines() if not ln.startswith("# created_utc=")]
    lb = [ln for ln in b.read_text().splitlines() if not ln.startswith("# created_utc=")]
    assert la == lb


def test_regions_parse_errors(tmp_path):
    regions = region_fixture()
    path = tmp_path / "regions.txt"
    write_regions(regions, str(path), created_utc="x")
    lines = path.read_text().splitlines()

    bad = list(lines)
    bad[0] = "# pdml-regions v2"
    path.write_text("\n".join(bad) + "\n")
    with pytest.raises(FileFormatError, match="version marker"):
        read_regions(str(path))

    path.write_text("\n".join(lines[:-1]) + "\n")  # one cell row short
    with pytest.raises(FileFormatError, match="cell rows"):
        read_regions(str(path))

    bad = list(lines)
    bad[-1] = bad[-1][:-1] + "7"  # label outside 0-3
    path.write_text("\n".join(bad) + "\n")
    with pytest.raises(FileFormatError, match="digits"):
        read_regions(str(path))

    bad = list(lines)
    bad[-1] = bad[-1] + "0"  # row too long
    path.write_text("\n".join(bad) + "\n")
    with pytest.raises(FileFormatError, match="digits"):
        read_regions(str(path))

    bad = [ln for ln in lines if not ln.startswith("# p_axis=")]
    path.write_text("\n".join(bad) + "\n")
    with pytest.raises(FileFormatError, match="axis"):
        read_regions(str(path))


# -- Confusion and trace writers -------------------------------------------------


def test_confusion_file_format(tmp_path):
    counts = np.array([[5, 1, 0, 0], [1, 3, 0, 0], [0, 0, 4, 1], [0, 0, 2, 3]])
    conf = ConfusionMatrix.from_counts(counts)
    path = tmp_path / "confusion.csv"
    write_confusion(conf, str(path), "abcd", "pdml")
    lines = path.read_text().splitlines()
    assert lines[0] == "# pdml-confusion v1"
    assert "# config_sha256=abcd" in lines and "# detector=pdml" in lines
    assert lines[3] == "decision,H0,H1,H2,H3"
    assert len(lines) == 8
    got = np.array([[float(v) for v in ln.split(",")[1:]] for ln in lines[4:]])
    assert np.allclose(got, conf.freq)


def test_summary_lines_contents():
    counts = np.array([[8, 2, 0, 0], [0, 6, 0, 0], [0, 0, 7, 0], [2, 2, 3, 10]])
    out = summary_lines(ConfusionMatrix.from_counts(counts))
    assert len(out) == 4
    assert out[0].startswith("H0: detection=0.8000")
    assert "truth_count=10" in out[0]
    # H3 false alarm: 7 wrong calls out of 30 non-H3 truths
    assert "false_alarm=0.2333" in out[3]


def test_trace_file_format(tmp_path):
    result = TimelineResult(
        epoch=np.arange(3),
        truth=np.array([0, 2, 2], dtype=np.int8),
        power_db=np.array([0.0, 2.5, 2.25]),
        distortion=np.array([17.0, 900.0, 1100.0]),
        decision=np.array([0, 3, 2], dtype=np.int8),
        traces=np.zeros((4, 3)),
    )
    path = tmp_path / "trace.csv"
    write_trace(result, str(path), "ffff", seed=3, detector="pdml")
    lines = path.read_text().splitlines()
    assert lines[0] == "# pdml-trace v1"
    assert lines[4] == "epoch,truth,power_db,distortion,decision"
    assert lines[5] == "0,H0,0.0,17.0,H0"
    assert lines[6] == "1,H2,2.5,900.0,H3"
    assert len(lines) == 8


# -- Schedule files ----------------------------------------------------------------


def write_schedule(tmp_path, doc):
    p = tmp_path / "schedule.json"
    p.write_text(json.dumps(doc))
    return str(p)


GOOD_SCHEDULE = {
    "version": 1,
    "phases": [
        {"start": 0, "stop": 10, "hypothesis": "H0"},
        {
            "start": 10,
            "stop": 40,
            "hypothesis": "H2",
            "params": {"eta": 2.0, "dtau_i": 0.0, "dtheta_i": 0.9, "cn0_dbhz": 47.0},
            "ramp": {"dtau_i": 1.5},
        },
    ],
}


def test_schedule_roundtrip(tmp_path):
    phases = read_schedule(write_schedule(tmp_path, GOOD_SCHEDULE))
    assert len(phases) == 2
    assert (phases[0].start, phases[0].stop) == (0, 10)
    assert phases[0].params.hypothesis is Hypothesis.H0
    p = phases[1].params
    assert p.hypothesis is Hypothesis.H2
    assert p.eta == 2.0 and p.dtheta_i == 0.9
    assert p.noise.sigma_n_sq == pytest.approx(10**-4.7 / 0.04)
    assert phases[1].ramp == {"dtau_i": 1.5}
    # defaults: cn0 45 when not stated
    assert phases[0].params.noise.sigma_n_sq == pytest.approx(10**-4.5 / 0.04)


def test_schedule_rejects_structural_errors(tmp_path):
    doc = dict(GOOD_SCHEDULE, version=2)
    with pytest.raises(ScheduleError, match="version"):
        read_schedule(write_schedule(tmp_path, doc))

    doc = {"version": 1, "phases": []}
    with pytest.raises(ScheduleError, match="phases"):
        read_schedule(write_schedule(tmp_path, doc))

    doc = {"version": 1, "phases": [{"start": 5, "stop": 10, "hypothesis": "H0"}]}
    with pytest.raises(ScheduleError, match="epoch 0"):
        read_schedule(write_schedule(tmp_path, doc))

    doc = {"version": 1, "phases": [
        {"start": 0, "stop": 10, "hypothesis": "H0"},
        {"start": 12, "stop": 20, "hypothesis": "H3", "params": {"jnr": 10.0}},
    ]}
    with pytest.raises(ScheduleError, match="contiguous"):
        read_schedule(write_schedule(tmp_path, doc))


def test_schedule_rejects_bad_content(tmp_path):
    doc = {"version": 1, "phases": [{"start": 0, "stop": 5, "hypothesis": "H7"}]}
    with pytest.raises(ScheduleError, match="H0-H3"):
        read_schedule(write_schedule(tmp_path, doc))

    doc = {"version": 1, "phases": [{"start": 0, "stop": 5, "hypothesis": "H0", "label": "x"}]}
    with pytest.raises(ScheduleError, match="label"):
        read_schedule(write_schedule(tmp_path, doc))

    doc = {"version": 1, "phases": [
        {"start": 0, "stop": 5, "hypothesis": "H2", "params": {"eta": 1.0, "power": 3}}]}
    with pytest.raises(ScheduleError, match="power"):
        read_schedule(write_schedule(tmp_path, doc))

    doc = {"version": 1, "phases": [
        {"start": 0, "stop": 5, "hypothesis": "H2", "params": {"eta": 1.0, "dtau_i": 0.1},
         "ramp": {"p_auth": 2.0}}]}
    with pytest.raises(ScheduleError, match="ramp"):
        read_schedule(write_schedule(tmp_path, doc))

    p = tmp_path / "nojson.json"
    p.write_text("{broken")
    with pytest.raises(ScheduleError, match="JSON"):
        read_schedule(str(p))


def test_bundled_schedules_parse():
    root = pathlib.Path(__file__).resolve().parent.parent
    for name in ("jamming_onset", "spoof_pulloff"):
        phases = read_schedule(str(root / "scripts" / "schedules" / f"{name}.json"))
        assert phases[0].params.hypothesis is Hypothesis.H0
        assert phases[-1].stop == 400
