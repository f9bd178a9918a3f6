import json

import numpy as np
import pytest

from armcal import add
from armcal.cli import main
from armcal.dataio import read_dataset, read_pose
from armcal.fixtures import fixture_path

CHAIN = str(fixture_path("arm7"))
INTR = str(fixture_path("intrinsics_640x480"))


def run(*argv) -> int:
    return main([str(a) for a in argv])


@pytest.fixture()
def dataset_dir(tmp_path):
    out = tmp_path / "ds"
    rc = run(
        "synth", "--chain", CHAIN, "--intrinsics", INTR,
        "--frames", 8, "--camera-mode", "static", "--seed", 21, "--out", out,
    )
    assert rc == 0
    return out


@pytest.fixture()
def noisy_dataset_dir(tmp_path):
    noise = tmp_path / "noise.json"
    noise.write_text('{"pixel_sigma": 2.0}')
    out = tmp_path / "noisy"
    rc = run(
        "synth", "--chain", CHAIN, "--intrinsics", INTR, "--noise-config", noise,
        "--frames", 8, "--seed", 22, "--out", out,
        "--marker-rot-noise-deg", 0.5, "--marker-trans-noise-mm", 2.0,
    )
    assert rc == 0
    return out


class TestSynthCommand:
    def test_outputs_exist(self, dataset_dir):
        assert (dataset_dir / "dataset.json").exists()
        assert (dataset_dir / "handeye_samples.json").exists()
        assert (dataset_dir / "manifest.json").exists()

    def test_manifest_records_inputs_and_seed(self, dataset_dir):
        manifest = json.loads((dataset_dir / "manifest.json").read_text())
        assert manifest["command"] == "synth"
        assert manifest["config"]["seed"] == 21
        assert CHAIN in manifest["inputs"]
        assert len(manifest["inputs"][CHAIN]) == 64  # sha256 hex

    def test_byte_identical_reruns(self, tmp_path):
        for sub in ("x", "y"):
            rc = run(
                "synth", "--chain", CHAIN, "--intrinsics", INTR,
                "--frames", 4, "--seed", 7, "--out", tmp_path / sub,
            )
            assert rc == 0
        a = (tmp_path / "x/dataset.json").read_bytes()
        b = (tmp_path / "y/dataset.json").read_bytes()
        assert a == b

    def test_belief_map_emission(self, tmp_path):
        out = tmp_path / "bm"
        rc = run(
            "synth", "--chain", CHAIN, "--intrinsics", INTR,
            "--frames", 2, "--seed", 3, "--out", out, "--emit-belief-maps",
        )
        assert rc == 0
        assert (out / "frames/000000.bmap").exists()
        assert (out / "frames/000000.bmap.json").exists()


class TestCalibrateCommand:
    def test_noiseless_recovers_gt(self, dataset_dir, tmp_path):
        pose_path = tmp_path / "pose.json"
        rc = run(
            "calibrate", "--chain", CHAIN, "--intrinsics", INTR,
            "--frames", dataset_dir, "--out", pose_path,
        )
        assert rc == 0
        est = read_pose(pose_path)
        frame = read_dataset(dataset_dir).frames[0]
        assert add(est, frame.gt_cam_from_base, frame.keypoints3d) < 1e-4  # mm
        doc = json.loads(pose_path.read_text())
        assert doc["n_points"] == 8 and doc["frames_used"] == 1

    def test_multiframe_flag(self, dataset_dir, tmp_path):
        pose_path = tmp_path / "pose.json"
        rc = run(
            "calibrate", "--chain", CHAIN, "--intrinsics", INTR,
            "--frames", dataset_dir, "--multiframe", "--out", pose_path,
        )
        assert rc == 0
        assert json.loads(pose_path.read_text())["frames_used"] == 8

    def test_no_refine_flag(self, dataset_dir, tmp_path):
        pose_path = tmp_path / "pose.json"
        rc = run(
            "calibrate", "--chain", CHAIN, "--intrinsics", INTR,
            "--frames", dataset_dir, "--no-refine", "--out", pose_path,
        )
        assert rc == 0
        est = read_pose(pose_path)
        frame = read_dataset(dataset_dir).frames[0]
        # EPnP alone is already tight on noiseless data
        assert add(est, frame.gt_cam_from_base, frame.keypoints3d) < 0.01  # mm

    def test_too_few_detections_exit_2(self, dataset_dir, tmp_path, capsys):
        doc = json.loads((dataset_dir / "dataset.json").read_text())
        for frame in doc["frames"]:
            frame["detections"] = dict(list(frame["detections"].items())[:3])
        (dataset_dir / "dataset.json").write_text(json.dumps(doc))
        rc = run(
            "calibrate", "--chain", CHAIN, "--intrinsics", INTR,
            "--frames", dataset_dir, "--out", tmp_path / "pose.json",
        )
        assert rc == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"]["kind"] == "InsufficientPoints"

    def test_belief_map_route_matches_detections(self, tmp_path):
        out = tmp_path / "bm"
        assert run(
            "synth", "--chain", CHAIN, "--intrinsics", INTR,
            "--frames", 3, "--seed", 5, "--out", out, "--emit-belief-maps",
        ) == 0
        direct, via_maps = tmp_path / "direct.json", tmp_path / "maps.json"
        assert run(
            "calibrate", "--chain", CHAIN, "--intrinsics", INTR,
            "--frames", out, "--out", direct,
        ) == 0
        assert run(
            "calibrate", "--chain", CHAIN, "--intrinsics", INTR,
            "--frames", out, "--belief-maps", out, "--out", via_maps,
        ) == 0
        frame = read_dataset(out).frames[0]
        est_a, est_b = read_pose(direct), read_pose(via_maps)
        assert add(est_a, est_b, frame.keypoints3d) < 0.2  # mm

    def test_missing_file_exit_1(self, tmp_path, capsys):
        rc = run(
            "calibrate", "--chain", CHAIN, "--intrinsics", INTR,
            "--frames", tmp_path / "nope", "--out", tmp_path / "pose.json",
        )
        assert rc == 1


class TestExtractCommand:
    def test_detections_json(self, tmp_path):
        out = tmp_path / "bm"
        assert run(
            "synth", "--chain", CHAIN, "--intrinsics", INTR,
            "--frames", 1, "--seed", 5, "--out", out, "--emit-belief-maps",
        ) == 0
        det_path = tmp_path / "dets.json"
        assert run("extract", "--stack", out / "frames/000000.bmap", "--out", det_path) == 0
        doc = json.loads(det_path.read_text())
        assert doc["scale"] == 1.0
        frame = read_dataset(out).frames[0]
        for name, entry in doc["detections"].items():
            if entry is not None:
                assert np.allclose(entry["pixel"], frame.detections[name], atol=0.1)


class TestEvaluateCommand:
    def test_gt_pose_scores_perfectly(self, dataset_dir, tmp_path):
        frame = read_dataset(dataset_dir).frames[0]
        pose_path = tmp_path / "gt_pose.json"
        pose_path.write_text(json.dumps(frame.gt_cam_from_base.to_dict()))
        report_path = tmp_path / "report.json"
        rc = run(
            "evaluate", "--dataset", dataset_dir, "--pose", pose_path,
            "--report", report_path, "--csv", tmp_path / "curves.csv",
        )
        assert rc == 0
        report = json.loads(report_path.read_text())
        assert report["add"]["fractions"] == [1.0, 1.0, 1.0]
        assert report["pck"]["thresholds_px"] == [2.5, 5.0, 10.0]
        assert report["add"]["thresholds_mm"] == [20.0, 40.0, 60.0]
        csv = (tmp_path / "curves.csv").read_text().splitlines()
        assert csv[0] == "metric,threshold,fraction"
        assert len(csv) == 7  # header + 3 pck + 3 add

    def test_offset_pose_add_fractions(self, dataset_dir, tmp_path):
        frame = read_dataset(dataset_dir).frames[0]
        gt = frame.gt_cam_from_base
        shifted = gt.to_dict()
        shifted["translation_m"] = [
            gt.translation[0], gt.translation[1], gt.translation[2] + 0.030,
        ]
        pose_path = tmp_path / "pose.json"
        pose_path.write_text(json.dumps(shifted))
        report_path = tmp_path / "report.json"
        rc = run("evaluate", "--dataset", dataset_dir, "--pose", pose_path, "--report", report_path)
        assert rc == 0
        report = json.loads(report_path.read_text())
        # constant 30 mm error: below none of {20}, all of {40, 60}
        assert report["add"]["fractions"] == [0.0, 1.0, 1.0]

    def test_per_frame_poses(self, dataset_dir, tmp_path):
        frames = read_dataset(dataset_dir).frames
        poses_path = tmp_path / "poses.json"
        poses_path.write_text(json.dumps([f.gt_cam_from_base.to_dict() for f in frames]))
        report_path = tmp_path / "report.json"
        rc = run(
            "evaluate", "--dataset", dataset_dir, "--per-frame-poses", poses_path,
            "--report", report_path,
        )
        assert rc == 0
        report = json.loads(report_path.read_text())
        assert report["add"]["fractions"] == [1.0, 1.0, 1.0]
        assert report["add_mean_mm"] < 1e-9

    def test_empty_dataset_exit_3(self, tmp_path, capsys):
        ds = tmp_path / "empty"
        ds.mkdir()
        (ds / "dataset.json").write_text(
            '{"schema": "armcal.dataset.v1", "meta": {}, "frames": []}'
        )
        pose = tmp_path / "pose.json"
        pose.write_text(
            '{"rotation_quat_wxyz": [1, 0, 0, 0], "translation_m": [0, 0, 0]}'
        )
        rc = run("evaluate", "--dataset", ds, "--pose", pose, "--report", tmp_path / "r.json")
        assert rc == 3


class TestSweepCommand:
    def test_noiseless_sweep_csv(self, dataset_dir, tmp_path):
        out = tmp_path / "sweep.csv"
        rc = run(
            "sweep", "--dataset", dataset_dir, "--solver", "dream",
            "--m-range", "1,2,3", "--seed", 4, "--out", out,
        )
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "m,mean,median,min,max"
        assert len(lines) == 4
        for line in lines[1:]:
            stats = [float(v) for v in line.split(",")[1:]]
            assert max(stats) < 0.1  # mm, noiseless

    def test_hec_sweep_and_m_floor(self, noisy_dataset_dir, tmp_path, capsys):
        out = tmp_path / "sweep.csv"
        rc = run(
            "sweep", "--dataset", noisy_dataset_dir, "--solver", "hec",
            "--hec-samples", noisy_dataset_dir / "handeye_samples.json",
            "--m-range", "3,4", "--seed", 4, "--out", out,
        )
        assert rc == 0
        rc = run(
            "sweep", "--dataset", noisy_dataset_dir, "--solver", "hec",
            "--hec-samples", noisy_dataset_dir / "handeye_samples.json",
            "--m-range", "1..2", "--seed", 4, "--out", out,
        )
        assert rc == 2
        assert json.loads(capsys.readouterr().err)["error"]["kind"] == "SolverUnavailableForM"

    def test_seeded_bytes_identical(self, dataset_dir, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            rc = run(
                "sweep", "--dataset", dataset_dir, "--solver", "dream",
                "--m-range", "1,2", "--seed", 11, "--out", out,
            )
            assert rc == 0
        assert a.read_bytes() == b.read_bytes()

    def test_threads_flag_does_not_change_output(self, dataset_dir, tmp_path):
        serial, threaded = tmp_path / "s.csv", tmp_path / "t.csv"
        assert run(
            "sweep", "--dataset", dataset_dir, "--solver", "dream",
            "--m-range", "1,2", "--seed", 11, "--out", serial,
        ) == 0
        assert run(
            "--threads", 4, "sweep", "--dataset", dataset_dir, "--solver", "dream",
            "--m-range", "1,2", "--seed", 11, "--out", threaded,
        ) == 0
        assert serial.read_bytes() == threaded.read_bytes()


class TestHandeyeCommand:
    def test_noiseless_samples_recover(self, dataset_dir, tmp_path):
        out = tmp_path / "hec.json"
        rc = run("handeye", "--samples", dataset_dir / "handeye_samples.json", "--out", out)
        assert rc == 0
        doc = json.loads(out.read_text())
        assert doc["solver"] == "park_martin"
        gt = read_dataset(dataset_dir).frames[0].gt_cam_from_base
        cam = doc["cam_from_base"]
        assert np.allclose(cam["translation_m"], gt.translation, atol=1e-8)
        assert doc["rotation_residual_rad"] < 1e-9

    def test_two_samples_exit_2(self, dataset_dir, tmp_path, capsys):
        samples = json.loads((dataset_dir / "handeye_samples.json").read_text())
        short = tmp_path / "two.json"
        short.write_text(json.dumps(samples[:2]))
        rc = run("handeye", "--samples", short, "--out", tmp_path / "out.json")
        assert rc == 2
        assert json.loads(capsys.readouterr().err)["error"]["kind"] == "InsufficientMotion"


class TestCompareCommand:
    def test_noiseless_both_solvers_tiny_error(self, dataset_dir, tmp_path):
        out = tmp_path / "compare.json"
        rc = run(
            "compare", "--dataset", dataset_dir,
            "--hec-samples", dataset_dir / "handeye_samples.json",
            "--m-range", "1,3,5", "--seed", 2, "--out", out,
        )
        assert rc == 0
        doc = json.loads(out.read_text())
        assert doc["gt_add_mm"]["dream"] < 0.1
        assert doc["gt_add_mm"]["hec"] < 0.1
        assert doc["workspace_error"]["dream"]["mean_mm"] < 0.1
        assert {"m", "mean_mm", "median_mm", "min_mm", "max_mm", "n_combinations"} <= set(
            doc["dream"]["sweep"]["per_m"][0]
        )

    def test_absent_hec_degrades_with_warning(self, dataset_dir, tmp_path):
        out = tmp_path / "compare.json"
        rc = run(
            "compare", "--dataset", dataset_dir, "--m-range", "1,2", "--seed", 2, "--out", out,
        )
        assert rc == 0
        doc = json.loads(out.read_text())
        assert doc["hec"] is None
        assert "warning" in doc

    def test_identical_reruns(self, dataset_dir, tmp_path):
        outs = [tmp_path / "a.json", tmp_path / "b.json"]
        for out in outs:
            rc = run(
                "compare", "--dataset", dataset_dir,
                "--hec-samples", dataset_dir / "handeye_samples.json",
                "--m-range", "1,3", "--seed", 2, "--out", out,
            )
            assert rc == 0
        assert outs[0].read_bytes() == outs[1].read_bytes()


class TestSchemaCommand:
    def test_prints_all(self, capsys):
        assert run("schema") == 0
        doc = json.loads(capsys.readouterr().out)
        assert "chain" in doc and "dataset" in doc

    def test_single_schema(self, capsys):
        assert run("schema", "--name", "intrinsics") == 0
        doc = json.loads(capsys.readouterr().out)
        assert set(doc["required"]) == {"fx", "fy", "cx", "cy", "width", "height"}

    def test_unknown_name_exit_1(self, capsys):
        assert run("schema", "--name", "bogus") == 1
