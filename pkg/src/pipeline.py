#!/usr/bin/env python3
"""
sarctl: maritime SAR detection pipeline

Stages, each persisting its products in the run directory:
1. simulate          raw echo (or ingest of a raw SARC file)
2. range_compress    chirp matched filter
3. doppler           slope + spectrum centroid estimates, ambiguity resolved
4. rcmc              range cell migration correction
5. azimuth_compress  azimuth matched filter, focus report
6. magnitude         detected amplitude
7. despeckle         m x n median filter
8. stats             ROI histogram, five-family fits, KL ranking
9. cfar              Weibull-designed 2-D CFAR
"""

import argparse
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

# Add src to path
sys.path.insert(0, str(Path(__file__).parent))

from cfar import cfar_scan
from clutter_stats import EmpiricalPdf, build_histogram, kl_distance, select_model
from config import DEFAULT_OUT_DIR, TOOL_VERSION
from despeckle import median_filter
from errors import ConfigError, InvalidInputError, SarError, StageError, exit_code_for
from image_io import export_pbm, export_pgm, read_complex, read_magnitude, write_image
from logging_conf import logger, metrics, set_level
from radar_model import expand_ship, inject_clutter, magnitude, simulate_echo
from rd_focus import (
    azimuth_compress, estimate_doppler, measure_focus, range_compress, rcmc, resolve_ambiguity,
)
from run_config import read_config
from schemas import (
    DopplerEstimate, Family, KlReport, PipelineConfig, RunManifest, StageRecord,
)
from store_csv import (
    CSVSchemas, CSVStore, fit_frame, hash_file, histogram_frame, kl_frame,
    load_fitted_models, read_key_values, write_key_values,
)
from utils_text import parse_roi

STAGES = (
    "simulate", "range_compress", "doppler", "rcmc", "azimuth_compress",
    "magnitude", "despeckle", "stats", "cfar",
)

# CLI subcommand -> (stage, step) pairs; 'stats' runs as two steps
COMMANDS: Dict[str, List[Tuple[str, str]]] = {
    "simulate": [("simulate", "simulate")],
    "focus": [(s, s) for s in ("range_compress", "doppler", "rcmc", "azimuth_compress", "magnitude")],
    "despeckle": [("despeckle", "despeckle")],
    "fit": [("stats", "fit")],
    "kl": [("stats", "kl")],
    "cfar": [("cfar", "cfar")],
}

MANIFEST_FILE = "manifest.json"


def pipeline_steps(stop_after: Optional[str] = None) -> List[Tuple[str, str]]:
    if stop_after is not None and stop_after not in STAGES:
        raise InvalidInputError(f"unknown stage '{stop_after}'")
    steps: List[Tuple[str, str]] = []
    for stage in STAGES:
        steps.extend([("stats", "fit"), ("stats", "kl")] if stage == "stats" else [(stage, stage)])
        if stage == stop_after:
            break
    return steps


class Pipeline:
    """Runs stages against one run directory"""

    def __init__(self, cfg: PipelineConfig, out_dir: Optional[Path] = None):
        self.cfg = cfg
        self.out_dir = Path(out_dir or cfg.run.out_dir or DEFAULT_OUT_DIR)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.manifest = self._load_manifest()
        self._cache: Dict[str, object] = {}

    # -- manifest --------------------------------------------------------

    def _load_manifest(self) -> RunManifest:
        """Reuse stage records of an earlier run with the same config and seed"""
        fresh = RunManifest(
            tool_version=TOOL_VERSION,
            config_hash=self.cfg.config_hash(),
            seed=self.cfg.run.seed,
            out_dir=str(self.out_dir),
        )
        path = self.out_dir / MANIFEST_FILE
        if not path.exists():
            return fresh
        try:
            previous = RunManifest.model_validate_json(path.read_text(encoding="utf-8"))
        except ValidationError:
            logger.warning(f"Ignoring unreadable {MANIFEST_FILE} in {self.out_dir}")
            return fresh
        if previous.config_hash != fresh.config_hash:
            logger.warning("Run directory holds products of a different config; starting a new manifest")
            return fresh
        return fresh.model_copy(update={"stages": previous.stages})

    def _record(self, stage: str, outputs: Sequence[str], reports: Sequence[str], seconds: float, merge: bool) -> None:
        hashes = {name: hash_file(self.out_dir / name) for name in outputs}
        stages = [s for s in self.manifest.stages if s.name != stage]
        previous = next((s for s in self.manifest.stages if s.name == stage), None)
        if merge and previous is not None:
            hashes = {**previous.outputs, **hashes}
            reports = list(previous.reports) + [r for r in reports if r not in previous.reports]
            seconds += previous.seconds
        record = StageRecord(name=stage, outputs=hashes, reports=list(reports), seconds=seconds)

        order = {name: i for i, name in enumerate(STAGES)}
        stages.append(record)
        stages.sort(key=lambda s: order.get(s.name, len(order)))
        self.manifest = self.manifest.model_copy(update={"stages": stages})

        (self.out_dir / MANIFEST_FILE).write_text(self.manifest.model_dump_json(indent=2), encoding="utf-8")

    # -- products --------------------------------------------------------

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def _load(self, name: str, reader: Callable[[Path], object]):
        if name not in self._cache:
            path = self.path(name)
            if not path.exists():
                raise FileNotFoundError(f"{path} is missing; run the earlier stages first")
            self._cache[name] = reader(path)
        return self._cache[name]

    def _save_image(self, name: str, img) -> str:
        write_image(self.path(name), img)
        self._cache[name] = img
        return name

    def _doppler(self) -> DopplerEstimate:
        def reader(path: Path) -> DopplerEstimate:
            values = read_key_values(path)
            return DopplerEstimate(**{k: (v if v != "" else None) for k, v in values.items()})
        return self._load("doppler.txt", reader)

    def _stats_source(self):
        name = "despeckled.sarm" if self.cfg.stats.source == "despeckled" else "magnitude.sarm"
        return self._load(name, read_magnitude)

    # -- steps -----------------------------------------------------------

    def step_simulate(self):
        scene, radar = self.cfg.scene, self.cfg.radar
        if scene.ingest is not None:
            raw = read_complex(scene.ingest)
            if (raw.n_az, raw.n_rg) != (scene.n_az, scene.n_rg):
                raise InvalidInputError(
                    f"ingested image is {raw.n_az}x{raw.n_rg}, config says {scene.n_az}x{scene.n_rg}"
                )
            logger.info(f"Ingested raw echo from {scene.ingest}")
        else:
            targets = list(scene.targets)
            for ship in scene.ships:
                targets.extend(expand_ship(radar, ship, scene.n_az, scene.n_rg, f_dc=scene.f_dc,
                                           eta0=scene.eta0, aperture=scene.aperture))
            clutter = scene.clutter if scene.clutter_stage == "raw" else None
            raw = simulate_echo(radar, targets, clutter, scene.n_az, scene.n_rg, self.cfg.run.seed, eta0=scene.eta0)
            metrics.increment("targets", len(targets))
            logger.info(f"Simulated {scene.n_az}x{scene.n_rg} echo with {len(targets)} scatterers")
        return [self._save_image("raw.sarc", raw)], []

    def step_range_compress(self):
        raw = self._load("raw.sarc", read_complex)
        rc = range_compress(raw, self.cfg.radar, window=self.cfg.focus.window)
        return [self._save_image("range_compressed.sarc", rc)], []

    def step_doppler(self):
        focus = self.cfg.focus
        if focus.doppler == "scene":
            prf = self.cfg.radar.prf
            f_dc = self.cfg.scene.f_dc
            dop = resolve_ambiguity(f_dc, float(np.mod(f_dc + prf / 2.0, prf) - prf / 2.0), prf)
            logger.info(f"Doppler centroid taken from the scene: {dop.f_dc:.2f} Hz")
        else:
            rc = self._load("range_compressed.sarc", read_complex)
            dop = estimate_doppler(rc, self.cfg.radar, n_lines=focus.n_lines,
                                   threshold_quantile=focus.slope_quantile)
        write_key_values(dop.model_dump(), self.path("doppler.txt"))
        self._cache["doppler.txt"] = dop
        return ["doppler.txt"], []

    def step_rcmc(self):
        rc = self._load("range_compressed.sarc", read_complex)
        rd = rcmc(rc, self.cfg.radar, self._doppler(), taps=self.cfg.focus.taps)
        return [self._save_image("range_doppler.sarc", rd)], []

    def step_azimuth_compress(self):
        rd = self._load("range_doppler.sarc", read_complex)
        focused = azimuth_compress(rd, self.cfg.radar, self._doppler(),
                                   phase_model=self.cfg.focus.phase_model, window=self.cfg.focus.window)

        reports: List[str] = []
        if np.any(focused.data != 0):
            report = measure_focus(focused, stage_seconds=metrics.stage_times)
            values = report.model_dump(exclude={"stage_seconds"})
            values.update({f"seconds_{k}": v for k, v in report.stage_seconds.items()})
            write_key_values(values, self.path("focus_report.txt"))
            reports.append("focus_report.txt")
            logger.info(
                f"Focus: peak ({report.peak_row}, {report.peak_col}), "
                f"-3 dB widths {report.range_width:.2f} rg x {report.azimuth_width:.2f} az samples"
            )
        else:
            logger.warning("Focused image is all zero; no focus report")

        scene = self.cfg.scene
        if scene.clutter is not None and scene.clutter_stage == "focused":
            focused = inject_clutter(focused, scene.clutter, self.cfg.run.seed)
        return [self._save_image("focused.sarc", focused)], reports

    def step_magnitude(self):
        focused = self._load("focused.sarc", read_complex)
        mag = magnitude(focused)
        export_pgm(mag, self.path("focused.pgm"), self.cfg.run.db_floor)
        return [self._save_image("magnitude.sarm", mag), "focused.pgm"], []

    def step_despeckle(self):
        mag = self._load("magnitude.sarm", read_magnitude)
        despeckled = median_filter(mag, self.cfg.despeckle.m, self.cfg.despeckle.n)
        export_pgm(despeckled, self.path("despeckled.pgm"), self.cfg.run.db_floor)
        return [self._save_image("despeckled.sarm", despeckled), "despeckled.pgm"], []

    def step_fit(self):
        img = self._stats_source()
        if self.cfg.stats.roi is not None:
            r0, c0, r1, c1 = self.cfg.stats.roi
            samples = img.data[r0:r1, c0:c1].ravel()
        else:
            samples = img.data.ravel()

        positive = samples[samples > 0]
        if positive.size < samples.size:
            logger.warning(f"Dropped {samples.size - positive.size} zero pixels from the statistics ROI")
        emp = build_histogram(positive, self.cfg.stats.bins)
        report = select_model(positive, emp=emp)
        metrics.increment("fits", len(report.models))

        CSVStore.write_table(histogram_frame(emp.bin_edges, emp.density), self.path("histogram.csv"),
                             CSVSchemas.HISTOGRAM)
        CSVStore.write_table(fit_frame(report.models), self.path("fit.csv"), CSVSchemas.FIT)
        return ["histogram.csv", "fit.csv"], []

    def step_kl(self):
        hist = CSVStore.read_table(self.path("histogram.csv"), CSVSchemas.HISTOGRAM)
        models = load_fitted_models(self.path("fit.csv"))
        edges = np.append(hist["bin_lo"].to_numpy(), hist["bin_hi"].to_numpy()[-1])
        emp = EmpiricalPdf(bin_edges=edges, density=hist["density"].to_numpy(), n_samples=0)

        distances = {family: kl_distance(emp, model) for family, model in models.items()}
        best = min(distances, key=lambda fam: (distances[fam], list(Family).index(fam)))
        report = KlReport(distances=distances, models=models, best_family=best)

        CSVStore.write_table(kl_frame(report), self.path("kl.csv"), CSVSchemas.KL)
        logger.info(f"Best clutter model: {best.value} (KL {distances[best]:.5f})")
        return ["kl.csv"], []

    def step_cfar(self):
        img = self._stats_source()
        cfar_cfg = self.cfg.cfar
        if cfar_cfg.q is None:
            models = load_fitted_models(self.path("fit.csv"))
            if Family.WEIBULL not in models:
                raise InvalidInputError("no Weibull fit available and no manual q configured")
            cfar_cfg = cfar_cfg.model_copy(update={"model": models[Family.WEIBULL]})

        result = cfar_scan(img, cfar_cfg)
        CSVStore.write_table(result.detections, self.path("detections.csv"), CSVSchemas.DETECTIONS)
        export_pbm(result.mask, self.path("mask.pbm"))
        return ["detections.csv", "mask.pbm"], []

    # -- driver ----------------------------------------------------------

    def run_step(self, stage: str, step: str) -> None:
        merge = step == "kl"
        logger.info(f"=== Stage: {stage}{'' if step == stage else f' ({step})'} ===")
        func = getattr(self, f"step_{step}")
        with metrics.stage(stage if not merge else f"{stage}.{step}"):
            try:
                outputs, reports = func()
            except Exception as e:
                metrics.increment("errors")
                raise StageError(stage, e) from e
        seconds = metrics.stage_times[stage if not merge else f"{stage}.{step}"]
        self._record(stage, outputs, reports, seconds, merge)

    def run(self, steps: Sequence[Tuple[str, str]]) -> RunManifest:
        for stage, step in steps:
            self.run_step(stage, step)
        return self.manifest


def run_pipeline(cfg: PipelineConfig, stop_after: Optional[str] = None, out_dir: Optional[Path] = None) -> RunManifest:
    """
    Run every stage (or up to stop_after) and return the manifest

    Raises:
        StageError: naming the failed stage; products of earlier stages stay on disk
    """
    metrics.reset()
    pipeline = Pipeline(cfg, out_dir)
    manifest = pipeline.run(pipeline_steps(stop_after))
    logger.info(metrics.get_summary())
    return manifest


def apply_overrides(
    cfg: PipelineConfig,
    seed: Optional[int] = None,
    out: Optional[Path] = None,
    roi: Optional[str] = None,
    pfa: Optional[float] = None,
) -> PipelineConfig:
    """Command-line values replace config values; the result is revalidated"""
    data = cfg.model_dump()
    if seed is not None:
        data["run"]["seed"] = seed
    if out is not None:
        data["run"]["out_dir"] = out
    if roi is not None:
        try:
            data["stats"]["roi"] = parse_roi(roi)
        except ValueError as e:
            raise ConfigError(f"--roi: {e}", field="roi") from e
    if pfa is not None:
        data["cfar"]["p_fa"] = pfa
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(p) for p in first.get("loc", ()))
        raise ConfigError(f"{field or 'config'}: {first['msg']}", field=field or None) from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sarctl", description="Maritime SAR focusing and ship detection")

    parser.add_argument(
        'command',
        choices=list(COMMANDS) + ['pipeline'],
        help='Subcommand to run on the run directory'
    )

    parser.add_argument(
        '--config',
        type=Path,
        required=True,
        help='Run config (.cfg)'
    )

    parser.add_argument(
        '--seed',
        type=int,
        help='Random seed (u64), overrides [run] seed'
    )

    parser.add_argument(
        '--out',
        type=Path,
        help='Run directory, overrides [run] out_dir'
    )

    parser.add_argument(
        '--stage',
        choices=list(STAGES),
        help='Stop the pipeline after this stage'
    )

    parser.add_argument(
        '--roi',
        type=str,
        help='Statistics rectangle r0,c0,r1,c1 (half-open)'
    )

    parser.add_argument(
        '--pfa',
        type=float,
        help='Design probability of false alarm'
    )

    parser.add_argument(
        '--quiet',
        action='store_true',
        help='Only log warnings and errors'
    )

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point; returns the process exit code"""
    args = build_parser().parse_args(argv)
    if args.quiet:
        set_level("WARNING")

    try:
        cfg = apply_overrides(read_config(args.config), seed=args.seed, out=args.out, roi=args.roi, pfa=args.pfa)
        if args.command == 'pipeline':
            manifest = run_pipeline(cfg, stop_after=args.stage)
        else:
            manifest = Pipeline(cfg).run(COMMANDS[args.command])
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return 1
    except (SarError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return exit_code_for(e)

    logger.info(f"Done: {len(manifest.stages)} stages recorded in {manifest.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
