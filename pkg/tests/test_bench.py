"""Naive/optimized pipeline agreement and the timing harness contract."""

import json

import numpy as np
import pytest

from posekit import DecoderConfig, FeatureMaps, write_scene_truth, write_tensor
from posekit.bench import (
    MIN_FRAMES,
    MODES,
    STAGE_HEADERS,
    Scenario,
    compare_skeletons,
    format_report,
    identity_geometry,
    load_scenario,
    make_canonical_scenario,
    naive_decode,
    optimized_decode,
    run_benchmark,
)
from posekit.errors import DimensionMismatchError, GateFailureError
from posekit.synth import RenderConfig, generate_scene


def _scenario(num_persons: int, height=32, width=57, seed=4) -> Scenario:
    persons, heatmaps, pafs = generate_scene(num_persons, RenderConfig(height, width, seed=seed))
    return Scenario(label=f"test-{num_persons}p", heatmaps=heatmaps, pafs=pafs,
                    geometry=identity_geometry(height, width), persons=tuple(persons))


# ---------------------------------------------------------------------------
# Pipeline agreement
# ---------------------------------------------------------------------------

def test_naive_and_optimized_pipelines_agree():
    sc = _scenario(4)
    cfg = DecoderConfig()
    naive = naive_decode(sc.heatmaps, sc.pafs, sc.geometry, cfg)
    optimized = optimized_decode(sc.heatmaps, sc.pafs, sc.geometry, cfg)
    assert len(naive) == 4
    assert compare_skeletons(naive, optimized) is None


def test_compare_skeletons_reports_count_mismatch():
    sc = _scenario(2)
    skeletons = optimized_decode(sc.heatmaps, sc.pafs, sc.geometry, DecoderConfig())
    diff = compare_skeletons(skeletons, skeletons[:1])
    assert diff is not None and "count" in diff


def test_compare_skeletons_reports_coordinate_drift():
    sc = _scenario(2)
    skeletons = optimized_decode(sc.heatmaps, sc.pafs, sc.geometry, DecoderConfig())
    moved = list(skeletons)
    sk = moved[0]
    kps = list(sk.keypoints)
    idx = next(i for i, kp in enumerate(kps) if kp is not None)
    kps[idx] = kps[idx].__class__(id=kps[idx].id, kind=kps[idx].kind,
                                  x=kps[idx].x + 1.0, y=kps[idx].y, score=kps[idx].score)
    moved[0] = sk.__class__(tuple(kps), sk.score, sk.num_keypoints)
    diff = compare_skeletons(skeletons, moved)
    assert diff is not None and "coordinates differ" in diff


def test_compare_skeletons_ignores_ordering():
    sc = _scenario(3)
    skeletons = optimized_decode(sc.heatmaps, sc.pafs, sc.geometry, DecoderConfig())
    assert compare_skeletons(skeletons, list(reversed(skeletons))) is None


# ---------------------------------------------------------------------------
# Harness contract
# ---------------------------------------------------------------------------

def test_run_benchmark_rejects_bad_arguments():
    sc = _scenario(1, height=24, width=33)
    with pytest.raises(ValueError):
        run_benchmark(sc, "fastest")
    with pytest.raises(ValueError):
        run_benchmark(sc, "optimized", frames=1)


def test_run_benchmark_gate_failure_raises(monkeypatch):
    sc = _scenario(1, height=24, width=33)
    monkeypatch.setattr("posekit.bench.compare_skeletons", lambda *a, **k: "forced diff")
    with pytest.raises(GateFailureError) as err:
        run_benchmark(sc, "optimized")
    assert "forced diff" in str(err.value)


def test_report_invariants_and_fps_arithmetic():
    sc = _scenario(2, height=24, width=33)
    report = run_benchmark(sc, "optimized", frames=MIN_FRAMES)
    t = report.timings
    assert report.mode in MODES
    assert report.scenario == sc.label
    assert t.frames == MIN_FRAMES
    assert min(t.resize_ns, t.extract_ns, t.group_ns, t.total_ns) >= 1
    assert t.total_ns >= max(t.resize_ns, t.extract_ns, t.group_ns)
    assert len(t.config_digest) == 16
    int(t.config_digest, 16)  # hex
    fps = report.fps
    assert set(fps) == set(STAGE_HEADERS)
    assert fps["Total"] == float(f"{1e9 / t.total_ns:.3g}")
    assert report.pipeline_fps == fps["Total"]


def test_report_text_and_json_carry_the_same_numbers():
    sc = _scenario(2, height=24, width=33)
    report = run_benchmark(sc, "optimized")
    payload = json.loads(json.dumps(report.to_json_dict()))
    text = format_report(report)
    lines = text.splitlines()
    assert len(lines) == 4
    assert lines[0].startswith(f"Scenario: {sc.label}  Mode: optimized")
    assert lines[1].startswith("Machine: ")
    header_cells = lines[2]
    assert header_cells.startswith("     ")
    pos = 0
    for header in STAGE_HEADERS:
        found = header_cells.find(header)
        assert found > pos  # exact names, left to right
        pos = found
    assert lines[3].startswith("Fps  ")
    cells = lines[3][5:].split()
    assert [float(c) for c in cells] == [payload["fps"][h] for h in STAGE_HEADERS]
    assert payload["median_ns"]["Total"] == report.timings.total_ns
    assert payload["config_digest"] == report.timings.config_digest


def test_config_digest_tracks_config_and_shape():
    sc_a = _scenario(1, height=24, width=33)
    rep_base = run_benchmark(sc_a, "optimized")
    rep_cfg = run_benchmark(sc_a, "optimized", cfg=DecoderConfig(peak_threshold=0.2))
    assert rep_base.timings.config_digest != rep_cfg.timings.config_digest


def test_resize_time_grows_with_upsample_factor():
    sc = _scenario(1, height=24, width=33)
    four = run_benchmark(sc, "optimized", cfg=DecoderConfig(upsample_factor=4))
    eight = run_benchmark(sc, "optimized", cfg=DecoderConfig(upsample_factor=8))
    # Factor 8 moves four times the pixels; medians are far beyond noise.
    assert eight.timings.resize_ns > four.timings.resize_ns


def test_empty_scene_makes_grouping_the_fastest_stage():
    sc = _scenario(0)
    report = run_benchmark(sc, "optimized")
    fps = report.fps
    assert fps["Group keypoints"] >= fps["Resize feature maps"]
    assert fps["Group keypoints"] >= fps["Extract keypoints"]


# ---------------------------------------------------------------------------
# Scenario plumbing
# ---------------------------------------------------------------------------

def test_make_canonical_scenario_shape():
    sc = make_canonical_scenario()
    assert sc.label == "canonical"
    assert (sc.heatmaps.height, sc.heatmaps.width) == (32, 57)
    assert len(sc.persons) == 20
    assert sc.geometry.net_input_width == 57 * 8


def test_load_scenario_round_trip(tmp_path):
    persons, heatmaps, pafs = generate_scene(2, RenderConfig(32, 57, seed=9))
    write_tensor(heatmaps, tmp_path / "heatmaps.ptns")
    write_tensor(pafs, tmp_path / "pafs.ptns")
    write_scene_truth(persons, RenderConfig(32, 57, seed=9), tmp_path / "truth.json")
    sc = load_scenario(tmp_path)
    assert sc.label == tmp_path.name
    assert len(sc.persons) == 2
    np.testing.assert_array_equal(sc.heatmaps.data, heatmaps.data)


def test_load_scenario_rejects_mismatched_truth(tmp_path):
    persons, heatmaps, pafs = generate_scene(2, RenderConfig(32, 57, seed=9))
    write_tensor(heatmaps, tmp_path / "heatmaps.ptns")
    write_tensor(pafs, tmp_path / "pafs.ptns")
    write_scene_truth(persons, RenderConfig(16, 57, seed=9), tmp_path / "truth.json")
    with pytest.raises(DimensionMismatchError):
        load_scenario(tmp_path)


def test_optimized_decode_reuses_workspace_without_drift():
    sc = _scenario(3)
    cfg = DecoderConfig()
    from posekit.bench import DecodeWorkspace
    ws = DecodeWorkspace(sc.heatmaps.height, sc.heatmaps.width, cfg.upsample_factor)
    first = optimized_decode(sc.heatmaps, sc.pafs, sc.geometry, cfg, workspace=ws)
    second = optimized_decode(sc.heatmaps, sc.pafs, sc.geometry, cfg, workspace=ws)
    assert first == second
