"""
Pydantic schemas for acquisition parameters, scene description, estimates and reports
"""

import hashlib
import math
from enum import Enum
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config import SPEED_OF_LIGHT, DB_FLOOR, INTERP_TAPS
from utils_text import parse_roi


class Family(str, Enum):
    """Amplitude distribution families for sea clutter"""
    WEIBULL = "weibull"
    LOGNORMAL = "lognormal"
    INVERSE_GAUSSIAN = "inverse_gaussian"
    GAMMA = "gamma"
    RAYLEIGH = "rayleigh"


class Hypothesis(str, Enum):
    """Outcome of the CFAR test for one cell"""
    H0 = "clutter"
    H1 = "target"


def check_family_params(family: Family, p1: float, p2: Optional[float]) -> None:
    """Raise ValueError if (p1, p2) are not valid parameters for the family"""
    if family == Family.RAYLEIGH:
        if not p1 > 0:
            raise ValueError(f"rayleigh sigma must be > 0, got {p1}")
        return
    if p2 is None:
        raise ValueError(f"{family.value} needs two parameters")
    if family == Family.LOGNORMAL:
        # location of log may be any real
        if not math.isfinite(p1) or not p2 > 0:
            raise ValueError(f"lognormal needs finite location and scale > 0, got ({p1}, {p2})")
        return
    if not (p1 > 0 and p2 > 0):
        raise ValueError(f"{family.value} parameters must be > 0, got ({p1}, {p2})")


class RadarParams(BaseModel):
    """Acquisition constants of a strip-map chirp radar"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    f_c: float = Field(..., gt=0, description="Carrier frequency (Hz)")
    fr: float = Field(..., gt=0, description="Range sampling rate (Hz)")
    prf: float = Field(..., gt=0, description="Pulse repetition frequency (Hz)")
    r0: float = Field(..., gt=0, description="Slant range of the first range sample (m)")
    chirp_rate: float = Field(..., gt=0, description="Chirp FM rate (Hz/s)")
    t_chirp: float = Field(..., gt=0, description="Chirp duration (s)")
    v: float = Field(..., gt=0, description="Effective platform speed (m/s)")
    b: float = Field(..., gt=0, description="Chirp bandwidth (Hz)")
    t0: Optional[float] = Field(None, gt=0, description="Fast time of the first sample (s); defaults to 2*r0/c")

    @model_validator(mode="after")
    def check_chirp(self) -> "RadarParams":
        rel = abs(self.chirp_rate * self.t_chirp - self.b) / self.b
        # Published parameter tables round chirp rate and duration independently
        if rel > 1e-4:
            raise ValueError(
                f"chirp_rate * t_chirp = {self.chirp_rate * self.t_chirp:.6g} Hz "
                f"does not match b = {self.b:.6g} Hz"
            )
        if self.t0 is None:
            object.__setattr__(self, "t0", 2.0 * self.r0 / SPEED_OF_LIGHT)
        return self

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_c

    @property
    def chirp_samples(self) -> int:
        """Nonzero samples spanned by the chirp at the range sampling rate"""
        return int(math.floor(self.t_chirp * self.fr + 1e-9))

    @property
    def range_spacing(self) -> float:
        """Slant-range distance between adjacent range samples (m)"""
        return SPEED_OF_LIGHT / (2.0 * self.fr)

    def azimuth_fm_rate(self, r0: float) -> float:
        """Doppler FM rate K_a at closest-approach range r0"""
        return 2.0 * self.v ** 2 / (self.wavelength * r0)


class SceneTarget(BaseModel):
    """Point scatterer of the simulated scene"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    amplitude: float = Field(..., ge=0, description="|sigma|, dimensionless")
    phase: float = Field(0.0, description="arg(sigma), radians")
    r0: float = Field(..., gt=0, description="Closest-approach slant range (m)")
    eta_c: float = Field(..., description="Beam-center crossing slow time (s)")
    f_dc: float = Field(0.0, description="Doppler centroid of the beam at this target (Hz)")
    aperture: Optional[float] = Field(None, gt=0, description="Synthetic aperture duration (s); default from PRF")

    @property
    def sigma(self) -> complex:
        return self.amplitude * complex(math.cos(self.phase), math.sin(self.phase))


class ShipSpec(BaseModel):
    """Extended target placed by its focused-image footprint"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    row: int = Field(..., ge=0, description="Zero-Doppler azimuth row of the footprint center")
    col: int = Field(..., ge=0, description="Closest-approach range column of the footprint center")
    az_extent: int = Field(12, ge=1, description="Footprint length in azimuth samples")
    rg_extent: int = Field(8, ge=1, description="Footprint width in range samples")
    amplitude: float = Field(..., gt=0, description="|sigma| of every scatterer on the footprint")


class ClutterSpec(BaseModel):
    """Amplitude family of synthetic sea clutter (phase is uniform)"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    family: Family = Field(..., description="Distribution family")
    p1: float = Field(..., description="First family parameter")
    p2: Optional[float] = Field(None, description="Second family parameter (unused for Rayleigh)")

    @model_validator(mode="after")
    def check_params(self) -> "ClutterSpec":
        check_family_params(self.family, self.p1, self.p2)
        return self


class FittedModel(BaseModel):
    """Maximum-likelihood fit of one family to amplitude samples"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    family: Family
    p1: float = Field(..., description="Weibull alpha, lognormal gamma, IG mu, gamma a, Rayleigh sigma")
    p2: Optional[float] = Field(None, description="Weibull beta, lognormal eta, IG lambda, gamma b")
    n_samples: int = Field(0, ge=0)
    log_likelihood: float = Field(float("nan"))

    @model_validator(mode="after")
    def check_params(self) -> "FittedModel":
        check_family_params(self.family, self.p1, self.p2)
        return self


class DopplerEstimate(BaseModel):
    """Coarse, fractional and resolved Doppler centroid"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    f_dc_coarse: float = Field(..., description="Slope-method centroid (Hz)")
    f_dc_frac: float = Field(..., description="Spectrum-method centroid in [-PRF/2, PRF/2) (Hz)")
    ambiguity_index: int = Field(..., description="PRF ambiguity number M")
    f_dc: float = Field(..., description="Unambiguous centroid f_dc_frac + M*PRF (Hz)")
    prf: float = Field(..., gt=0)
    slope: Optional[float] = Field(None, description="Range samples per azimuth sample")
    radial_velocity: Optional[float] = Field(None, description="dR/d(eta) (m/s)")

    @model_validator(mode="after")
    def check_consistency(self) -> "DopplerEstimate":
        if self.f_dc != self.f_dc_frac + self.ambiguity_index * self.prf:
            raise ValueError("f_dc must equal f_dc_frac + M*PRF")
        if abs(self.f_dc - self.f_dc_coarse) > self.prf / 2 + 1e-9 * self.prf:
            raise ValueError("resolved centroid is more than PRF/2 from the coarse estimate")
        return self


class FocusReport(BaseModel):
    """Quality figures of a focused image"""
    model_config = ConfigDict(extra="forbid")

    stage_seconds: Dict[str, float] = Field(default_factory=dict)
    peak_row: int = Field(..., ge=0)
    peak_col: int = Field(..., ge=0)
    peak_magnitude: float = Field(..., ge=0)
    # A critically sampled sinc is narrower than one sample
    range_width: float = Field(..., gt=0, description="-3 dB range width (samples)")
    azimuth_width: float = Field(..., gt=0, description="-3 dB azimuth width (samples)")


class KlReport(BaseModel):
    """KL distance of every fitted family against one histogram"""
    model_config = ConfigDict(extra="forbid")

    distances: Dict[Family, float]
    models: Dict[Family, FittedModel]
    best_family: Family

    @field_validator("distances")
    @classmethod
    def check_nonnegative(cls, v: Dict[Family, float]) -> Dict[Family, float]:
        if not v:
            raise ValueError("no family could be fitted")
        for family, d in v.items():
            if d < 0:
                raise ValueError(f"negative KL distance for {family.value}: {d}")
        return v

    @model_validator(mode="after")
    def check_best(self) -> "KlReport":
        if self.distances[self.best_family] != min(self.distances.values()):
            raise ValueError("best_family does not attain the minimum KL distance")
        return self


class CfarConfig(BaseModel):
    """Two-dimensional CFAR window and false-alarm design"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    guard_az: int = Field(..., ge=0, description="Guard half-extent per azimuth wing (cells)")
    guard_rg: int = Field(..., ge=0, description="Guard half-extent per range wing (cells)")
    train_az: int = Field(..., ge=0, description="Training band per azimuth wing (cells)")
    train_rg: int = Field(..., ge=0, description="Training band per range wing (cells)")
    p_fa: float = Field(1e-6, gt=0, lt=1, description="Design probability of false alarm")
    q: Optional[float] = Field(None, gt=0, description="Manual override of the design parameter Q")
    model: Optional[FittedModel] = Field(None, description="Clutter model driving Q")

    @model_validator(mode="after")
    def check_training(self) -> "CfarConfig":
        if self.train_az == 0 and self.train_rg == 0:
            raise ValueError("training band is empty: train_az and train_rg are both 0")
        return self

    @property
    def half_extent_az(self) -> int:
        return self.guard_az + self.train_az

    @property
    def half_extent_rg(self) -> int:
        return self.guard_rg + self.train_rg


class SceneConfig(BaseModel):
    """Image grid, beam Doppler centroid and clutter of the simulated scene"""
    model_config = ConfigDict(extra="forbid")

    n_az: int = Field(..., ge=1)
    n_rg: int = Field(..., ge=1)
    eta0: float = Field(0.0, description="Slow time of the first azimuth sample (s)")
    f_dc: float = Field(0.0, description="Beam Doppler centroid shared by ships and default targets (Hz)")
    aperture: Optional[float] = Field(None, gt=0, description="Synthetic aperture duration override (s)")
    clutter: Optional[ClutterSpec] = None
    clutter_stage: Literal["raw", "focused"] = "raw"
    targets: List[SceneTarget] = Field(default_factory=list)
    ships: List[ShipSpec] = Field(default_factory=list)
    ingest: Optional[Path] = Field(None, description="Raw SARC file used instead of simulation")


class FocusConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_lines: Optional[int] = Field(None, ge=1, description="Range columns averaged for the fractional centroid")
    taps: int = Field(INTERP_TAPS, ge=2, description="RCMC interpolator length")
    slope_quantile: float = Field(0.999, gt=0, lt=1)
    window: Literal["none", "hamming"] = "none"
    phase_model: Literal["hyperbolic", "parabolic"] = "hyperbolic"
    doppler: Literal["estimate", "scene"] = Field("estimate", description="Estimate f_dc from the data or take the scene value")

    @field_validator("taps")
    @classmethod
    def check_even(cls, v: int) -> int:
        if v % 2:
            raise ValueError("taps must be even")
        return v


class DespeckleConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    m: int = Field(6, ge=1, description="Window rows (azimuth)")
    n: int = Field(6, ge=1, description="Window columns (range)")


class StatsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    bins: Optional[int] = Field(None, ge=1, description="Histogram bins; Rice rule when absent")
    roi: Optional[Tuple[int, int, int, int]] = Field(None, description="r0,c0,r1,c1 half-open")
    source: Literal["despeckled", "magnitude"] = "despeckled"

    @field_validator("roi", mode="before")
    @classmethod
    def parse_roi_text(cls, v):
        if isinstance(v, str):
            return parse_roi(v)
        return v


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = Field(0, ge=0, lt=2 ** 64)
    out_dir: Optional[Path] = None
    db_floor: float = Field(DB_FLOOR, lt=0)


class PipelineConfig(BaseModel):
    """Complete validated run description"""
    model_config = ConfigDict(extra="forbid")

    radar: RadarParams
    scene: SceneConfig
    focus: FocusConfig = Field(default_factory=FocusConfig)
    despeckle: DespeckleConfig = Field(default_factory=DespeckleConfig)
    stats: StatsConfig = Field(default_factory=StatsConfig)
    cfar: CfarConfig = Field(default_factory=lambda: CfarConfig(guard_az=60, guard_rg=90, train_az=5, train_rg=5))
    run: RunConfig = Field(default_factory=RunConfig)

    @model_validator(mode="after")
    def check_bounds(self) -> "PipelineConfig":
        n_az, n_rg = self.scene.n_az, self.scene.n_rg
        if self.stats.roi is not None:
            r0, c0, r1, c1 = self.stats.roi
            if not (0 <= r0 < r1 <= n_az and 0 <= c0 < c1 <= n_rg):
                raise ValueError(f"roi {self.stats.roi} is not inside the {n_az}x{n_rg} image")
        if self.despeckle.m > n_az or self.despeckle.n > n_rg:
            raise ValueError("despeckle window is larger than the image")
        if self.cfar.half_extent_az > (n_az - 1) // 2 or self.cfar.half_extent_rg > (n_rg - 1) // 2:
            raise ValueError("cfar window does not fit inside the image")
        for ship in self.scene.ships:
            if ship.row >= n_az or ship.col >= n_rg:
                raise ValueError(f"ship at ({ship.row}, {ship.col}) is outside the image")
        return self

    def config_hash(self) -> str:
        """SHA-256 of the canonical config, output directory excluded"""
        canonical = self.model_dump_json(exclude={"run": {"out_dir"}})
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class StageRecord(BaseModel):
    """One executed pipeline stage"""
    name: str
    outputs: Dict[str, str] = Field(default_factory=dict, description="file name -> sha256")
    reports: List[str] = Field(default_factory=list, description="Files with run-dependent content (not hashed)")
    seconds: float = 0.0


class RunManifest(BaseModel):
    """Record of a pipeline run"""
    tool_version: str
    config_hash: str
    seed: int
    out_dir: str
    stages: List[StageRecord] = Field(default_factory=list)

    def output_hashes(self) -> Dict[str, str]:
        hashes: Dict[str, str] = {}
        for stage in self.stages:
            hashes.update(stage.outputs)
        return hashes
