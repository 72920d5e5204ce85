import pytest
import sys
from pathlib import Path

import numpy as np
from scipy import ndimage

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from config import CONFIGS_DIR
from errors import ConfigError, StageError
from image_io import write_image
from pipeline import (
    MANIFEST_FILE, STAGES, Pipeline, apply_overrides, main, pipeline_steps, run_pipeline,
)
from radar_model import ComplexImage
from run_config import parse_config, read_config
from schemas import RunManifest
from store_csv import CSVSchemas, CSVStore


SMALL_SCENE = """\
[radar]
f_c = 5.3e9
fr = 32.317e6
prf = 1256.98
r0 = 988650.0
chirp_rate = 7.213413e12
t_chirp = 4.175e-6
v = 7062.0
b = 30.116e6

[scene]
n_az = 256
n_rg = 512
f_dc = 0.0
aperture = 0.1
clutter_family = weibull
clutter_p1 = 1.9521
clutter_p2 = 0.4835
clutter_stage = focused

[target.a]
row = 128
col = 256
amplitude = 0.03

[focus]
window = hamming

[despeckle]
m = 3
n = 3

[cfar]
guard_az = 12
guard_rg = 12
train_az = 4
train_rg = 4
q = 8.0

[run]
seed = 5
"""

PRODUCTS = [
    "raw.sarc", "range_compressed.sarc", "doppler.txt", "range_doppler.sarc", "focused.sarc",
    "magnitude.sarm", "focused.pgm", "despeckled.sarm", "despeckled.pgm",
    "histogram.csv", "fit.csv", "kl.csv", "detections.csv", "mask.pbm",
]


@pytest.fixture
def small_cfg():
    return parse_config(SMALL_SCENE)


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL_SCENE, encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("small_run")
    manifest = run_pipeline(parse_config(SMALL_SCENE), out_dir=out_dir)
    return manifest, out_dir


class TestStages:

    def test_full_step_list(self):
        steps = pipeline_steps()
        assert [stage for stage, _ in steps] == list(STAGES[:7]) + ["stats", "stats", "cfar"]
        assert ("stats", "kl") in steps

    def test_stop_after(self):
        assert pipeline_steps("doppler") == [("simulate", "simulate"), ("range_compress", "range_compress"),
                                              ("doppler", "doppler")]

    def test_unknown_stage(self):
        with pytest.raises(ValueError):
            pipeline_steps("detect")


@pytest.mark.integration
class TestRunPipeline:
    """End-to-end run on a small scene"""

    def test_manifest_lists_every_stage(self, small_run):
        manifest, out_dir = small_run
        assert [s.name for s in manifest.stages] == list(STAGES)
        assert set(manifest.output_hashes()) == set(PRODUCTS)
        for name in PRODUCTS:
            assert (out_dir / name).exists()

    def test_manifest_file_matches(self, small_run):
        manifest, out_dir = small_run
        on_disk = RunManifest.model_validate_json((out_dir / MANIFEST_FILE).read_text(encoding="utf-8"))
        assert on_disk.output_hashes() == manifest.output_hashes()
        assert on_disk.seed == 5

    def test_focus_report_not_hashed(self, small_run):
        manifest, out_dir = small_run
        assert (out_dir / "focus_report.txt").exists()
        assert "focus_report.txt" not in manifest.output_hashes()

    def test_doppler_near_zero(self, small_run):
        _, out_dir = small_run
        text = (out_dir / "doppler.txt").read_text(encoding="utf-8")
        values = dict(line.split(" = ") for line in text.strip().splitlines())
        assert int(values["ambiguity_index"]) == 0
        assert abs(float(values["f_dc"])) <= 1256.98 / 256 * 2

    def test_target_detected(self, small_run):
        _, out_dir = small_run
        detections = CSVStore.read_table(out_dir / "detections.csv", CSVSchemas.DETECTIONS)
        assert len(detections) > 0
        distance = np.hypot(detections["row"] - 128, detections["col"] - 256)
        assert distance.min() <= 2
        assert distance.max() <= 2 * np.hypot(25, 25)

    def test_rerun_is_bit_identical(self, small_run, tmp_path):
        manifest, _ = small_run
        again = run_pipeline(parse_config(SMALL_SCENE), out_dir=tmp_path / "again")
        assert again.output_hashes() == manifest.output_hashes()
        assert again.config_hash == manifest.config_hash

    def test_seed_changes_products(self, small_run, tmp_path):
        manifest, _ = small_run
        cfg = apply_overrides(parse_config(SMALL_SCENE), seed=6)
        other = run_pipeline(cfg, stop_after="azimuth_compress", out_dir=tmp_path / "seed6")
        hashes = other.output_hashes()
        assert hashes["raw.sarc"] == manifest.output_hashes()["raw.sarc"]
        assert hashes["focused.sarc"] != manifest.output_hashes()["focused.sarc"]

    def test_subcommands_match_pipeline(self, small_run, config_file, tmp_path):
        manifest, _ = small_run
        out_dir = tmp_path / "chain"
        for command in ("simulate", "focus", "despeckle", "fit", "kl", "cfar"):
            assert main([command, "--config", str(config_file), "--out", str(out_dir), "--quiet"]) == 0
        chained = RunManifest.model_validate_json((out_dir / MANIFEST_FILE).read_text(encoding="utf-8"))
        assert chained.output_hashes() == manifest.output_hashes()
        assert [s.name for s in chained.stages] == list(STAGES)


@pytest.mark.integration
class TestDesignedThreshold:
    """Q designed from the fitted Weibull model instead of set by hand"""

    def test_target_found_at_design_rate(self, tmp_path):
        text = (SMALL_SCENE
                .replace("[despeckle]\nm = 3\nn = 3\n", "[despeckle]\nm = 1\nn = 1\n\n[stats]\nsource = magnitude\n")
                .replace("guard_az = 12\nguard_rg = 12\ntrain_az = 4\ntrain_rg = 4\nq = 8.0\n",
                         "guard_az = 6\nguard_rg = 9\ntrain_az = 3\ntrain_rg = 3\np_fa = 1e-3\n"))
        cfg = parse_config(text)
        assert cfg.cfar.q is None
        run_pipeline(cfg, out_dir=tmp_path)

        fits = CSVStore.read_table(tmp_path / "fit.csv", CSVSchemas.FIT)
        assert "weibull" in set(fits["family"])
        detections = CSVStore.read_table(tmp_path / "detections.csv", CSVSchemas.DETECTIONS)
        distance = np.hypot(detections["row"] - 128, detections["col"] - 256)
        assert distance.min() <= 2
        rate = len(detections) / (256 * 512)
        assert 1e-4 <= rate <= 1e-2


class TestStopAndResume:

    def test_stage_flag_stops(self, config_file, tmp_path):
        out_dir = tmp_path / "partial"
        assert main(["pipeline", "--config", str(config_file), "--out", str(out_dir), "--stage", "rcmc",
                     "--quiet"]) == 0
        manifest = RunManifest.model_validate_json((out_dir / MANIFEST_FILE).read_text(encoding="utf-8"))
        assert [s.name for s in manifest.stages] == ["simulate", "range_compress", "doppler", "rcmc"]
        assert not (out_dir / "focused.sarc").exists()

    def test_later_stage_without_inputs(self, small_cfg, tmp_path):
        pipeline = Pipeline(small_cfg, tmp_path / "empty")
        with pytest.raises(StageError) as exc_info:
            pipeline.run_step("despeckle", "despeckle")
        assert exc_info.value.stage == "despeckle"
        assert isinstance(exc_info.value.cause, FileNotFoundError)


class TestExitCodes:
    """CLI error mapping"""

    def test_missing_config(self, tmp_path):
        assert main(["pipeline", "--config", str(tmp_path / "absent.cfg"), "--quiet"]) == 4

    def test_invalid_config(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text(SMALL_SCENE.replace("q = 8.0", "q = 8.0\np_fa = 2.0"), encoding="utf-8")
        assert main(["pipeline", "--config", str(path), "--quiet"]) == 2

    def test_invalid_override(self, config_file, tmp_path):
        assert main(["pipeline", "--config", str(config_file), "--out", str(tmp_path / "o"),
                     "--pfa", "1.5", "--quiet"]) == 2

    def test_stage_failure(self, tmp_path):
        raw_path = tmp_path / "raw_in.sarc"
        write_image(raw_path, ComplexImage(data=np.zeros((8, 8)), t0=1.0, dt=1.0, eta0=0.0, deta=1.0))
        path = tmp_path / "ingest.cfg"
        path.write_text(SMALL_SCENE.replace("aperture = 0.1", f"aperture = 0.1\ningest = {raw_path}"),
                        encoding="utf-8")
        assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "o"), "--quiet"]) == 3

    def test_unreadable_ingest(self, tmp_path):
        raw_path = tmp_path / "raw_in.sarc"
        raw_path.write_bytes(b"SARC")
        path = tmp_path / "ingest.cfg"
        path.write_text(SMALL_SCENE.replace("aperture = 0.1", f"aperture = 0.1\ningest = {raw_path}"),
                        encoding="utf-8")
        assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "o"), "--quiet"]) == 4


class TestOverrides:

    def test_values_replaced(self, small_cfg, tmp_path):
        cfg = apply_overrides(small_cfg, seed=42, out=tmp_path, roi="0,0,64,128", pfa=1e-3)
        assert cfg.run.seed == 42
        assert cfg.run.out_dir == tmp_path
        assert cfg.stats.roi == (0, 0, 64, 128)
        assert cfg.cfar.p_fa == 1e-3

    def test_nothing_given(self, small_cfg):
        assert apply_overrides(small_cfg) == small_cfg

    @pytest.mark.parametrize("kwargs", [{"roi": "1,2,3"}, {"roi": "0,0,999,10"}, {"pfa": 0.0}])
    def test_rejected(self, small_cfg, kwargs):
        with pytest.raises(ConfigError):
            apply_overrides(small_cfg, **kwargs)


@pytest.mark.slow
@pytest.mark.integration
class TestBundledScenes:
    """Full-size runs of the bundled configs"""

    def test_demo_ships_found(self, tmp_path):
        cfg = read_config(CONFIGS_DIR / "demo.cfg")
        manifest = run_pipeline(cfg, out_dir=tmp_path)
        assert len(manifest.stages) == 9

        detections = CSVStore.read_table(tmp_path / "detections.csv", CSVSchemas.DETECTIONS)
        mask = np.zeros((cfg.scene.n_az, cfg.scene.n_rg), dtype=bool)
        mask[detections["row"].to_numpy(), detections["col"].to_numpy()] = True
        _, n_clusters = ndimage.label(mask)
        assert n_clusters >= 3

        ships = np.array([(s.row, s.col) for s in cfg.scene.ships], dtype=float)
        limit = 2 * np.hypot(2 * cfg.cfar.guard_az + 1, 2 * cfg.cfar.guard_rg + 1)
        points = detections[["row", "col"]].to_numpy(dtype=float)
        nearest = np.min(np.hypot(points[:, None, 0] - ships[None, :, 0], points[:, None, 1] - ships[None, :, 1]), axis=1)
        assert np.all(nearest <= limit)
        for ship in ships:
            assert np.min(np.hypot(points[:, 0] - ship[0], points[:, 1] - ship[1])) <= 8

    def test_clutter_only_false_alarm_rate(self, tmp_path):
        cfg = read_config(CONFIGS_DIR / "clutter_only.cfg")
        run_pipeline(cfg, out_dir=tmp_path)
        detections = CSVStore.read_table(tmp_path / "detections.csv", CSVSchemas.DETECTIONS)
        rate = len(detections) / (cfg.scene.n_az * cfg.scene.n_rg)
        assert 1e-4 <= rate <= 1e-2


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
