"""
Radar domain types and the synthetic strip-map echo simulator

Rows are azimuth (slow time), columns are range (fast time).
"""

import math
from dataclasses import dataclass
from typing import Iterable, List, Literal, Optional, Tuple

import numpy as np

from config import SPEED_OF_LIGHT, APERTURE_BANDWIDTH_FRACTION
from errors import InvalidInputError
from logging_conf import logger
from schemas import ClutterSpec, Family, RadarParams, SceneTarget, ShipSpec
from seeds import SeedManager
from workers import map_row_blocks

Domain = Literal["time", "range_doppler"]


def _freeze(array: np.ndarray) -> np.ndarray:
    # read-only view; the caller's array stays writable
    view = array.view()
    view.setflags(write=False)
    return view


@dataclass(frozen=True)
class ComplexImage:
    """Complex samples with fast-time and slow-time axis metadata"""

    data: np.ndarray
    t0: float
    dt: float
    eta0: float
    deta: float
    domain: Domain = "time"
    doppler_centroid: float = 0.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        if data.ndim != 2:
            raise InvalidInputError(f"image data must be 2-D, got shape {data.shape}")
        if not (self.dt > 0 and self.deta > 0):
            raise InvalidInputError("axis steps must be strictly positive")
        if self.domain not in ("time", "range_doppler"):
            raise InvalidInputError(f"unknown domain '{self.domain}'")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def n_az(self) -> int:
        return self.data.shape[0]

    @property
    def n_rg(self) -> int:
        return self.data.shape[1]

    def energy(self) -> float:
        return float(np.sum(np.abs(self.data) ** 2))

    def with_data(self, data: np.ndarray, **changes) -> "ComplexImage":
        """Copy of the axis metadata around new samples"""
        fields = dict(t0=self.t0, dt=self.dt, eta0=self.eta0, deta=self.deta,
                      domain=self.domain, doppler_centroid=self.doppler_centroid)
        fields.update(changes)
        return ComplexImage(data=data, **fields)


@dataclass(frozen=True)
class MagnitudeImage:
    """Non-negative real pixels"""

    data: np.ndarray
    t0: float = 0.0
    dt: float = 1.0
    eta0: float = 0.0
    deta: float = 1.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise InvalidInputError(f"image data must be 2-D, got shape {data.shape}")
        if data.size and not np.all(data >= 0):
            raise InvalidInputError("magnitude pixels must be non-negative and not NaN")
        if not (self.dt > 0 and self.deta > 0):
            raise InvalidInputError("axis steps must be strictly positive")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def n_az(self) -> int:
        return self.data.shape[0]

    @property
    def n_rg(self) -> int:
        return self.data.shape[1]

    def with_data(self, data: np.ndarray) -> "MagnitudeImage":
        return MagnitudeImage(data=data, t0=self.t0, dt=self.dt, eta0=self.eta0, deta=self.deta)


def magnitude(img: ComplexImage) -> MagnitudeImage:
    """Detected amplitude |s| of a complex image"""
    return MagnitudeImage(data=np.abs(img.data), t0=img.t0, dt=img.dt, eta0=img.eta0, deta=img.deta)


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

def default_aperture(params: RadarParams, r0: float) -> float:
    """Aperture duration whose Doppler bandwidth is 0.8 PRF at range r0"""
    return APERTURE_BANDWIDTH_FRACTION * params.prf / params.azimuth_fm_rate(r0)


def squint_offset(params: RadarParams, r0: float, f_dc: float) -> float:
    """
    Time from zero Doppler to beam center for a target at closest range r0

    Solves dR/d(eta) = -lambda*f_dc/2 on the hyperbolic range history.
    """
    u = -params.wavelength * f_dc / 2.0
    if abs(u) >= params.v:
        raise InvalidInputError(f"Doppler centroid {f_dc} Hz implies radial speed above platform speed")
    return u * r0 / (params.v * math.sqrt(params.v ** 2 - u ** 2))


def zero_doppler_time(params: RadarParams, target: SceneTarget) -> float:
    return target.eta_c - squint_offset(params, target.r0, target.f_dc)


def slant_range(params: RadarParams, target: SceneTarget, eta: np.ndarray) -> np.ndarray:
    """R(eta) = sqrt(R0^2 + v^2 (eta - eta_zero)^2)"""
    eta_zero = zero_doppler_time(params, target)
    return np.sqrt(target.r0 ** 2 + params.v ** 2 * (np.asarray(eta) - eta_zero) ** 2)


def focus_position(params: RadarParams, target: SceneTarget, n_az: int, eta0: float = 0.0) -> Tuple[int, int]:
    """(row, col) where the focused image puts the target's peak"""
    eta_zero = zero_doppler_time(params, target)
    row = int(round((eta_zero - eta0) * params.prf)) % n_az
    col = int(round((2.0 * target.r0 / SPEED_OF_LIGHT - params.t0) * params.fr))
    return row, col


def target_at(
    params: RadarParams,
    row: int,
    col: int,
    n_az: int,
    amplitude: float,
    f_dc: float = 0.0,
    phase: float = 0.0,
    eta0: float = 0.0,
    aperture: Optional[float] = None,
) -> SceneTarget:
    """
    Point target that focuses exactly on (row, col)

    The zero-Doppler time is chosen modulo the azimuth period so the
    beam-center crossing falls as close to the middle of the slow-time
    window as possible.
    """
    r0 = SPEED_OF_LIGHT * (params.t0 + col / params.fr) / 2.0
    offset = squint_offset(params, r0, f_dc)
    wraps = round((n_az / 2.0 - row - offset * params.prf) / n_az)
    eta_zero = eta0 + (row + wraps * n_az) / params.prf
    return SceneTarget(amplitude=amplitude, phase=phase, r0=r0, eta_c=eta_zero + offset,
                       f_dc=f_dc, aperture=aperture)


def expand_ship(
    params: RadarParams,
    ship: ShipSpec,
    n_az: int,
    n_rg: int,
    f_dc: float = 0.0,
    eta0: float = 0.0,
    aperture: Optional[float] = None,
) -> List[SceneTarget]:
    """Grid of in-phase point scatterers covering a ship footprint"""
    rows = ship.row - ship.az_extent // 2 + np.arange(ship.az_extent)
    cols = ship.col - ship.rg_extent // 2 + np.arange(ship.rg_extent)
    targets = [
        target_at(params, int(r), int(c), n_az, ship.amplitude, f_dc=f_dc, eta0=eta0, aperture=aperture)
        for r in rows if 0 <= r < n_az
        for c in cols if 0 <= c < n_rg
    ]
    return targets


# ---------------------------------------------------------------------------
# Signals
# ---------------------------------------------------------------------------

def ideal_chirp_replica(params: RadarParams, n: int) -> np.ndarray:
    """
    Transmitted chirp exp(j*pi*K*t^2) on t in [-T/2, T/2), zero-padded to n

    Sample L//2 is t = 0, where L = floor(T*Fr).
    """
    length = params.chirp_samples
    if n < length:
        raise InvalidInputError(f"replica length {n} is shorter than the chirp ({length} samples)")
    t = (np.arange(length) - length // 2) / params.fr
    replica = np.zeros(n, dtype=np.complex128)
    replica[:length] = np.exp(1j * np.pi * params.chirp_rate * t ** 2)
    return replica


def draw_amplitudes(spec: ClutterSpec, rng: np.random.Generator, size) -> np.ndarray:
    """Amplitude samples of the requested family"""
    if spec.family == Family.WEIBULL:
        return spec.p2 * rng.weibull(spec.p1, size)
    if spec.family == Family.LOGNORMAL:
        return rng.lognormal(spec.p1, spec.p2, size)
    if spec.family == Family.INVERSE_GAUSSIAN:
        return rng.wald(spec.p1, spec.p2, size)
    if spec.family == Family.GAMMA:
        return rng.gamma(spec.p1, spec.p2, size)
    if spec.family == Family.RAYLEIGH:
        return rng.rayleigh(spec.p1, size)
    raise InvalidInputError(f"unsupported clutter family {spec.family}")


def clutter_field(spec: ClutterSpec, n_az: int, n_rg: int, seed: int, stream: str = "clutter_raw") -> np.ndarray:
    """Independent complex clutter per pixel: family amplitude, uniform phase"""
    seeds = SeedManager(seed)

    def block(start: int, stop: int) -> np.ndarray:
        out = np.empty((stop - start, n_rg), dtype=np.complex128)
        for i in range(start, stop):
            rng = seeds.row_rng(stream, i)
            amplitude = draw_amplitudes(spec, rng, n_rg)
            phase = rng.uniform(0.0, 2.0 * np.pi, n_rg)
            out[i - start] = amplitude * np.exp(1j * phase)
        return out

    return np.vstack(map_row_blocks(block, n_az)) if n_az else np.zeros((0, n_rg), dtype=np.complex128)


def amplitude_field(spec: ClutterSpec, n_az: int, n_rg: int, seed: int) -> MagnitudeImage:
    """Magnitude-only clutter field, generated row by row like clutter_field"""
    seeds = SeedManager(seed)

    def block(start: int, stop: int) -> np.ndarray:
        return np.vstack([draw_amplitudes(spec, seeds.row_rng("field", i), n_rg) for i in range(start, stop)])

    return MagnitudeImage(data=np.vstack(map_row_blocks(block, n_az)))


def inject_clutter(img: ComplexImage, clutter: ClutterSpec, seed: int) -> ComplexImage:
    """Add clutter to an already focused image"""
    field_ = clutter_field(clutter, img.n_az, img.n_rg, seed, stream="clutter_focused")
    return img.with_data(img.data + field_)


def _add_target(image: np.ndarray, params: RadarParams, target: SceneTarget, eta0: float) -> float:
    """Add one echo in place; returns the fraction of its aperture gate inside the slow-time window"""
    n_az, n_rg = image.shape
    aperture = target.aperture or default_aperture(params, target.r0)
    half = aperture * params.prf / 2.0
    centre_row = (target.eta_c - eta0) * params.prf

    gate_lo = math.ceil(centre_row - half - 1e-9)
    gate_hi = math.floor(centre_row + half + 1e-9)
    i_lo, i_hi = max(0, gate_lo), min(n_az - 1, gate_hi)
    if i_lo > i_hi:
        return 0.0

    rows = np.arange(i_lo, i_hi + 1)
    eta = eta0 + rows / params.prf
    r = slant_range(params, target, eta)
    centre = (2.0 * r / SPEED_OF_LIGHT - params.t0) * params.fr
    half_chirp = params.t_chirp * params.fr / 2.0

    k_lo = np.ceil(centre - half_chirp - 1e-9).astype(np.int64)
    k_hi = np.ceil(centre + half_chirp - 1e-9).astype(np.int64)
    if k_lo.min() < 0 or k_hi.max() > n_rg:
        raise InvalidInputError(
            f"target at r0={target.r0:.2f} m has echo support outside the fast-time window "
            f"(columns {k_lo.min()}..{k_hi.max() - 1} of {n_rg})"
        )

    width = int((k_hi - k_lo).max())
    cols = k_lo[:, None] + np.arange(width)[None, :]
    inside = cols < k_hi[:, None]
    u = (cols - centre[:, None]) / params.fr

    carrier = target.sigma * np.exp(-1j * (4.0 * np.pi / params.wavelength) * r)
    values = carrier[:, None] * np.exp(1j * np.pi * params.chirp_rate * u ** 2)

    row_idx = np.broadcast_to(rows[:, None], cols.shape)
    image[row_idx[inside], cols[inside]] += values[inside]
    return (i_hi - i_lo + 1) / (gate_hi - gate_lo + 1)


def simulate_echo(
    params: RadarParams,
    targets: Iterable[SceneTarget],
    clutter: Optional[ClutterSpec],
    n_az: int,
    n_rg: int,
    seed: int,
    eta0: float = 0.0,
) -> ComplexImage:
    """
    Raw down-converted echo of point targets over optional clutter

    Args:
        params: acquisition constants
        targets: point scatterers; each contributes inside a rectangular
            chirp gate (length T) and aperture gate
        clutter: per-pixel clutter added in the raw domain
        n_az, n_rg: image size
        seed: clutter seed
        eta0: slow time of row 0

    Returns:
        ComplexImage in the time domain
    """
    if n_az < 1 or n_rg < 1:
        raise InvalidInputError(f"image size must be at least 1x1, got {n_az}x{n_rg}")

    image = np.zeros((n_az, n_rg), dtype=np.complex128)
    placed = 0
    clipped = []
    for target in targets:
        kept = _add_target(image, params, target, eta0)
        if kept == 0.0:
            logger.warning(f"Target at eta_c={target.eta_c:.4f} s has no aperture inside the slow-time window")
            continue
        placed += 1
        if kept < 1.0:
            clipped.append(kept)

    if clipped:
        logger.warning(
            f"{len(clipped)} of {placed} targets have their aperture clipped by the slow-time window "
            f"(as little as {100 * min(clipped):.0f}% kept); their Doppler spectra are truncated"
        )

    if clutter is not None:
        image += clutter_field(clutter, n_az, n_rg, seed, stream="clutter_raw")

    logger.debug(f"Simulated {n_az}x{n_rg} echo with {placed} targets")
    return ComplexImage(data=image, t0=params.t0, dt=1.0 / params.fr, eta0=eta0, deta=1.0 / params.prf)
