import json

import numpy as np
import pytest

from kplane import integrate, read_kpt
from kplane.cli import EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, main


def base_config(out_dir, phantom=None):
    return {
        "d": 2,
        "k": 1,
        "grid": {"origin": [-6.3, -6.3], "spacing": 0.2, "shape": [64, 64]},
        "frames": {"mode": "deterministic-circle", "count": 90},
        "t_grid": {"origin": [-12.7], "spacing": 0.2, "shape": [128]},
        "quad": {"halfwidth": 9.0, "nodes": 128},
        "filter": {"pad_factor": 2.0},
        "interp_order": 1,
        "phantom": phantom or {"kind": "gaussian", "mean": [0.0, 0.0]},
        "output": {"dir": str(out_dir)},
    }


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_phantom_gaussian_mass(tmp_path):
    cfg = base_config(tmp_path / "out")
    path = write_config(tmp_path, cfg)
    assert main(["phantom", "--config", path]) == 0
    fld = read_kpt(tmp_path / "out" / "phantom.kpt")
    assert integrate(fld) == pytest.approx(1.0, abs=1e-3)


def test_phantom_empty_mixture_is_zero(tmp_path):
    cfg = base_config(tmp_path / "out", phantom={"kind": "mixture", "components": []})
    path = write_config(tmp_path, cfg)
    assert main(["phantom", "--config", path]) == 0
    fld = read_kpt(tmp_path / "out" / "phantom.kpt")
    assert np.all(fld.values == 0.0)


def test_phantom_unknown_kind_exit_2(tmp_path):
    cfg = base_config(tmp_path / "out", phantom={"kind": "blob"})
    path = write_config(tmp_path, cfg)
    assert main(["phantom", "--config", path]) == EXIT_CONFIG


def test_invalid_schema_exit_2(tmp_path):
    cfg = base_config(tmp_path / "out")
    del cfg["grid"]
    path = write_config(tmp_path, cfg)
    assert main(["phantom", "--config", path]) == EXIT_CONFIG


def test_missing_input_exit_3(tmp_path):
    cfg = base_config(tmp_path / "out")
    path = write_config(tmp_path, cfg)
    assert main(["forward", "--config", path]) == EXIT_IO


def test_forward_fbp_pipeline_report(tmp_path):
    out = tmp_path / "out"
    cfg = base_config(
        out,
        phantom={
            "kind": "mixture",
            "components": [
                {"mean": [1.6, 0.8], "weight": 1.0},
                {"mean": [-1.2, -0.4], "weight": 0.7},
            ],
        },
    )
    cfg["frames"]["count"] = 180
    path = write_config(tmp_path, cfg)
    assert main(["phantom", "--config", path]) == 0
    assert main(["forward", "--config", path]) == 0
    assert main(["fbp", "--config", path]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["rel_l2_vs_reference"] <= 0.05
    assert "timings_ms" in report and "warnings" in report
    assert (out / "recon.slice.csv").read_text().startswith("coord,value")


def test_pipeline_rerun_is_byte_identical(tmp_path):
    out = tmp_path / "out"
    cfg = base_config(out)
    cfg["frames"] = {"mode": "monte-carlo", "count": 24, "seed": 11, "stream": 2}
    path = write_config(tmp_path, cfg)
    blobs = []
    for _ in range(2):
        assert main(["phantom", "--config", path]) == 0
        assert main(["forward", "--config", path]) == 0
        assert main(["fbp", "--config", path]) == 0
        blobs.append(
            (
                (out / "phantom.kpt").read_bytes(),
                (out / "sinogram.kpt").read_bytes(),
                (out / "recon.kpt").read_bytes(),
            )
        )
    assert blobs[0] == blobs[1]


def test_seed_override_changes_frames(tmp_path):
    out = tmp_path / "out"
    cfg = base_config(out)
    cfg["frames"] = {"mode": "monte-carlo", "count": 8, "seed": 11}
    path = write_config(tmp_path, cfg)
    assert main(["phantom", "--config", path]) == 0
    assert main(["forward", "--config", path]) == 0
    first = (out / "sinogram.kpt").read_bytes()
    assert main(["forward", "--config", path, "--seed", "99"]) == 0
    second = (out / "sinogram.kpt").read_bytes()
    assert first != second


def test_calibrate_reports_unit_gain(tmp_path):
    out = tmp_path / "out"
    cfg = base_config(out)
    cfg["frames"]["count"] = 180
    path = write_config(tmp_path, cfg)
    assert main(["calibrate", "--config", path]) == 0
    report = json.loads((out / "report.json").read_text())
    assert abs(report["gain"] - 1.0) <= 0.02


def test_verify_default_passes(tmp_path, capsys):
    assert main(["verify", "--out", str(tmp_path)]) == 0
    lines = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith(("PASS", "FAIL"))]
    assert len(lines) >= 10
    assert all(ln.startswith("PASS") for ln in lines)
    verdict = json.loads((tmp_path / "verify.json").read_text())
    assert all(entry["pass"] for entry in verdict.values())


def test_verify_zero_tolerance_fails(tmp_path):
    cfg = {"tolerances": {"fbp_rel_l2_2d": 0.0}, "output": {"dir": str(tmp_path)}}
    path = write_config(tmp_path, cfg)
    assert main(["verify", "--config", path]) == EXIT_CHECK_FAILED


def test_reconstruct_planted(tmp_path):
    out = tmp_path / "out"
    cfg = base_config(out)
    cfg["sparse"] = {
        "s": 2.0,
        "frame_count": 12,
        "offset_min": -3.0,
        "offset_max": 3.0,
        "offset_count": 16,
        "measurements": 50,
        "bump_width": 0.8,
        "lambda_rule": 1e-3,
        "seed": 123,
        "planted": [
            {"frame_index": 3, "offset_index": 5, "weight": 1.5},
            {"frame_index": 9, "offset_index": 11, "weight": -2.0},
        ],
        "tol": 1e-12,
        "max_iter": 50000,
    }
    path = write_config(tmp_path, cfg)
    assert main(["reconstruct", "--config", path]) == 0
    solution = json.loads((out / "solution.json").read_text())
    assert 0 < len(solution["support"]) <= 50
    assert solution["kkt"]["inactive_excess"] <= solution["lambda"] / 2 * 1e-11
    recon = read_kpt(out / "sparse_recon.kpt")
    assert np.all(np.isfinite(recon.values))


def test_phantom_ridge_sum(tmp_path):
    out = tmp_path / "out"
    cfg = base_config(
        out,
        phantom={
            "kind": "ridge-sum",
            "atoms": [
                {"frame": [[1.0, 0.0]], "offset": [0.5], "weight": 1.2},
                {"frame": [[0.0, 1.0]], "offset": [-0.3], "weight": 0.8},
            ],
        },
    )
    path = write_config(tmp_path, cfg)
    assert main(["phantom", "--config", path]) == 0
    fld = read_kpt(out / "phantom.kpt")
    # ridge sum peaks where both crests intersect: x = (0.5, -0.3)
    peak = np.unravel_index(np.argmax(fld.values), fld.shape)
    coords = fld.origin + fld.spacing * np.array(peak)
    assert np.linalg.norm(coords - np.array([0.5, -0.3])) <= fld.spacing * 1.5


def test_numeric_domain_error_exit_4(tmp_path):
    out = tmp_path / "out"
    cfg = base_config(out)
    cfg["sparse"] = {
        "s": 0.5,  # s <= d-k: unbounded atom, rejected by the dictionary builder
        "frame_count": 4, "offset_min": -1.0, "offset_max": 1.0, "offset_count": 4,
        "measurements": 3,
    }
    path = write_config(tmp_path, cfg)
    assert main(["reconstruct", "--config", path]) == EXIT_NUMERIC


def test_malformed_phantom_component_exit_2(tmp_path):
    cfg = base_config(tmp_path / "out",
                      phantom={"kind": "mixture", "components": [{"weight": 1.0}]})
    path = write_config(tmp_path, cfg)
    assert main(["phantom", "--config", path]) == EXIT_CONFIG


def test_reconstruct_from_measured_phantom(tmp_path):
    # phantom built from two dictionary atoms; measuring it reproduces the
    # planted synthesis, so recovery should find both atoms
    out = tmp_path / "out"
    offsets = np.linspace(-3.0, 3.0, 16)
    a3, a9 = np.pi * 3 / 12, np.pi * 9 / 12
    cfg = base_config(
        out,
        phantom={
            "kind": "ridge-sum",
            "atoms": [
                {"frame": [[np.cos(a3), np.sin(a3)]], "offset": [offsets[5]],
                 "weight": 1.5, "profile": "rbf", "s": 2.0},
                {"frame": [[np.cos(a9), np.sin(a9)]], "offset": [offsets[11]],
                 "weight": -2.0, "profile": "rbf", "s": 2.0},
            ],
        },
    )
    cfg["sparse"] = {
        "s": 2.0, "frame_count": 12, "offset_min": -3.0, "offset_max": 3.0,
        "offset_count": 16, "measurements": 50, "bump_width": 0.8,
        "lambda_rule": 1e-3, "seed": 123, "tol": 1e-12, "max_iter": 50000,
    }
    path = write_config(tmp_path, cfg)
    assert main(["phantom", "--config", path]) == 0
    assert main(["reconstruct", "--config", path]) == 0
    solution = json.loads((out / "solution.json").read_text())
    supp = set(solution["support"])
    for j in (3 * 16 + 5, 9 * 16 + 11):
        assert supp & {j, j - 1, j + 1, j - 16, j + 16}
    assert len(supp) <= 50


def test_forward_rejects_wrong_input_kind(tmp_path):
    from kplane import Sinogram, TGrid, frameset_circle, write_kpt

    out = tmp_path / "out"
    out.mkdir()
    frames = frameset_circle(4)
    sino = Sinogram(2, 1, list(frames.frames), TGrid.centered(1, 8, 0.5), np.zeros((4, 8)))
    write_kpt(out / "phantom.kpt", sino)
    cfg = base_config(out)
    path = write_config(tmp_path, cfg)
    assert main(["forward", "--config", path]) == EXIT_IO
