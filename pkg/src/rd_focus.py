"""
Range-Doppler image formation

range_compress -> estimate_doppler (slope, fractional, resolve) -> rcmc -> azimuth_compress
"""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import signal

from config import SPEED_OF_LIGHT, AZIMUTH_LINES, INTERP_TAPS, KAISER_BETA
from errors import EstimationError, InvalidInputError
from logging_conf import logger
from radar_model import ComplexImage, ideal_chirp_replica
from schemas import DopplerEstimate, FocusReport, RadarParams
from workers import map_row_blocks

# Minimum rows with a visible trajectory and maximum scatter (bins) around the fitted line
MIN_TRAJECTORY_ROWS = 8
MAX_TRAJECTORY_RMS = 4.0
# Peak-to-floor ratio below which the averaged azimuth spectrum counts as flat
MIN_SPECTRUM_CONTRAST = 1.5


def _check_time_domain(img: ComplexImage, params: RadarParams, what: str) -> None:
    if img.domain != "time":
        raise InvalidInputError(f"{what} expects time-domain data, got '{img.domain}'")
    if abs(img.dt * params.fr - 1.0) > 1e-9 or abs(img.t0 - params.t0) > 1e-9 * params.t0:
        raise InvalidInputError(
            f"{what}: image fast-time axis (t0={img.t0:.9g}, dt={img.dt:.9g}) "
            f"does not match radar parameters (t0={params.t0:.9g}, 1/Fr={1.0 / params.fr:.9g})"
        )
    if abs(img.deta * params.prf - 1.0) > 1e-9:
        raise InvalidInputError(f"{what}: slow-time step does not match PRF")


def hamming_taper(offset: np.ndarray, span: float) -> np.ndarray:
    """Hamming weight of frequencies offset from band center, zero outside span"""
    w = 0.54 + 0.46 * np.cos(2.0 * np.pi * offset / span)
    return np.where(np.abs(offset) <= span / 2.0, w, 0.0)


def slant_ranges(img: ComplexImage) -> np.ndarray:
    """Slant range of every range column (m)"""
    return SPEED_OF_LIGHT * (img.t0 + np.arange(img.n_rg) * img.dt) / 2.0


def doppler_axis(n_az: int, prf: float, f_dc: float) -> np.ndarray:
    """Unambiguous Doppler frequency of each azimuth FFT bin, within PRF/2 of f_dc"""
    f = np.fft.fftfreq(n_az, d=1.0 / prf)
    return f_dc + np.mod(f - f_dc + prf / 2.0, prf) - prf / 2.0


# ---------------------------------------------------------------------------
# Range compression
# ---------------------------------------------------------------------------

def range_compress(raw: ComplexImage, params: RadarParams, window: str = "none") -> ComplexImage:
    """
    Matched-filter every range line against the ideal chirp

    A point target at slant range R collapses to a sinc at fast time
    2R/c with peak gain floor(T*Fr).
    """
    _check_time_domain(raw, params, "range_compress")
    n = raw.n_rg
    length = params.chirp_samples
    kernel = np.roll(ideal_chirp_replica(params, n), -(length // 2))
    matched = np.conj(np.fft.fft(kernel))
    if window == "hamming":
        matched = matched * hamming_taper(np.fft.fftfreq(n, d=1.0 / params.fr), params.b)
    elif window != "none":
        raise InvalidInputError(f"unknown window '{window}'")

    def block(start: int, stop: int) -> np.ndarray:
        return np.fft.ifft(np.fft.fft(raw.data[start:stop], axis=1) * matched, axis=1)

    data = np.vstack(map_row_blocks(block, raw.n_az))
    return raw.with_data(data)


# ---------------------------------------------------------------------------
# Doppler centroid
# ---------------------------------------------------------------------------

def estimate_slope(rc: ComplexImage, threshold_quantile: float = 0.999) -> float:
    """
    Range-migration slope of the brightest trajectory (range samples per azimuth sample)

    Rows whose peak (near the brightest column) exceeds the magnitude
    quantile contribute one parabolic-refined peak position each; the
    slope is the least-squares line through them.
    """
    if not 0 < threshold_quantile < 1:
        raise InvalidInputError(f"threshold_quantile must be in (0, 1), got {threshold_quantile}")

    mag = np.abs(rc.data)
    threshold = float(np.quantile(mag, threshold_quantile))
    peak_row, peak_col = np.unravel_index(int(np.argmax(mag)), mag.shape)
    if not mag[peak_row, peak_col] > threshold:
        raise EstimationError("no pixels above the slope threshold")

    half = max(16, rc.n_rg // 8)
    lo, hi = max(0, peak_col - half), min(rc.n_rg, peak_col + half + 1)
    window = mag[:, lo:hi]
    rows = np.nonzero(window.max(axis=1) > threshold)[0]
    if len(rows) < MIN_TRAJECTORY_ROWS:
        raise EstimationError(f"only {len(rows)} rows above the slope threshold")

    sub = window[rows]
    idx = np.argmax(sub, axis=1)
    inner = (idx > 0) & (idx < sub.shape[1] - 1)
    left = sub[np.arange(len(rows)), np.clip(idx - 1, 0, None)]
    centre = sub[np.arange(len(rows)), idx]
    right = sub[np.arange(len(rows)), np.clip(idx + 1, None, sub.shape[1] - 1)]
    curvature = left - 2.0 * centre + right
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(inner & (curvature < 0), 0.5 * (left - right) / curvature, 0.0)
    position = lo + idx + delta

    slope, intercept = np.polyfit(rows.astype(np.float64), position, 1)
    rms = float(np.sqrt(np.mean((position - (slope * rows + intercept)) ** 2)))
    if rms > MAX_TRAJECTORY_RMS:
        raise EstimationError(f"no coherent trajectory (residual {rms:.2f} bins)")

    logger.debug(f"Trajectory slope {slope:.5f} from {len(rows)} rows, residual {rms:.3f} bins")
    return float(slope)


def slope_to_fdc(slope: float, params: RadarParams) -> Tuple[float, float]:
    """(radial velocity m/s, coarse Doppler centroid Hz) from a migration slope"""
    radial_velocity = slope * SPEED_OF_LIGHT / (2.0 * params.fr) * params.prf
    f_dc = -(2.0 / params.wavelength) * radial_velocity
    return radial_velocity, f_dc


def estimate_fractional_fdc(rc: ComplexImage, params: RadarParams, n_lines: Optional[int] = None) -> float:
    """
    Doppler centroid modulo PRF from the averaged azimuth power spectrum

    The n_lines strongest range columns are averaged, smoothed with a
    full-period raised-cosine kernel and the peak is refined by a
    parabola through 5 bins.
    """
    n_az, n_rg = rc.data.shape
    if n_lines is None:
        n_lines = min(AZIMUTH_LINES, n_rg)
    if not 1 <= n_lines <= n_rg:
        raise InvalidInputError(f"n_lines must be in [1, {n_rg}], got {n_lines}")
    if n_az < 8:
        raise InvalidInputError(f"need at least 8 azimuth samples, got {n_az}")

    column_energy = np.sum(np.abs(rc.data) ** 2, axis=0)
    columns = np.sort(np.argsort(-column_energy, kind="stable")[:n_lines])
    power = np.mean(np.abs(np.fft.fft(rc.data[:, columns], axis=0)) ** 2, axis=1)

    # circular convolution with (1 + cos) keeps only the mean and first harmonic
    k = np.arange(n_az)
    mean = float(np.mean(power))
    first = np.sum(power * np.exp(-2j * np.pi * k / n_az)) / n_az
    smoothed = mean + np.abs(first) * np.cos(2.0 * np.pi * k / n_az + np.angle(first))

    floor = float(smoothed.min())
    peak = float(smoothed.max())
    contrast = np.inf if floor <= 0 else peak / floor
    if mean <= 0 or contrast < MIN_SPECTRUM_CONTRAST:
        raise EstimationError(f"azimuth spectrum is flat (contrast {contrast:.3f})")

    k_peak = int(np.argmax(smoothed))
    offsets = np.arange(-2, 3)
    a, b, _ = np.polyfit(offsets.astype(np.float64), smoothed[(k_peak + offsets) % n_az], 2)
    refine = float(np.clip(-b / (2.0 * a), -2.0, 2.0)) if a < 0 else 0.0

    prf = params.prf
    f = (k_peak + refine) * prf / n_az
    return float(np.mod(f + prf / 2.0, prf) - prf / 2.0)


def resolve_ambiguity(
    f_dc_coarse: float,
    f_dc_frac: float,
    prf: float,
    slope: Optional[float] = None,
    radial_velocity: Optional[float] = None,
) -> DopplerEstimate:
    """Combine coarse and fractional centroids into the unambiguous one"""
    if not prf > 0:
        raise InvalidInputError(f"PRF must be > 0, got {prf}")
    m = int(round((f_dc_coarse - f_dc_frac) / prf))
    return DopplerEstimate(
        f_dc_coarse=f_dc_coarse,
        f_dc_frac=f_dc_frac,
        ambiguity_index=m,
        f_dc=f_dc_frac + m * prf,
        prf=prf,
        slope=slope,
        radial_velocity=radial_velocity,
    )


def estimate_doppler(
    rc: ComplexImage,
    params: RadarParams,
    n_lines: Optional[int] = None,
    threshold_quantile: float = 0.999,
) -> DopplerEstimate:
    """Slope method, spectrum method and ambiguity resolution in one call"""
    slope = estimate_slope(rc, threshold_quantile)
    radial_velocity, coarse = slope_to_fdc(slope, params)
    frac = estimate_fractional_fdc(rc, params, n_lines)
    dop = resolve_ambiguity(coarse, frac, params.prf, slope=slope, radial_velocity=radial_velocity)
    logger.info(
        f"Doppler centroid: slope {slope:.5f} -> {radial_velocity:.2f} m/s, "
        f"coarse {coarse:.1f} Hz, fractional {frac:.2f} Hz, M = {dop.ambiguity_index}, "
        f"f_dc = {dop.f_dc:.2f} Hz"
    )
    return dop


# ---------------------------------------------------------------------------
# RCMC and azimuth compression
# ---------------------------------------------------------------------------

def kaiser_sinc_weights(distance: np.ndarray, taps: int, beta: float = KAISER_BETA) -> np.ndarray:
    """Kaiser-windowed sinc weights for sample distances within taps/2"""
    half = taps / 2.0
    ratio = np.clip(1.0 - (distance / half) ** 2, 0.0, None)
    return np.sinc(distance) * np.i0(beta * np.sqrt(ratio)) / np.i0(beta)


def interpolate_line(values: np.ndarray, positions: np.ndarray, taps: int = INTERP_TAPS) -> np.ndarray:
    """Sample values at fractional positions; samples outside the line read as zero"""
    n = len(values)
    base = np.floor(positions).astype(np.int64)
    offsets = np.arange(taps) - (taps // 2 - 1)
    idx = base[:, None] + offsets[None, :]
    weights = kaiser_sinc_weights(positions[:, None] - idx, taps)
    weights /= weights.sum(axis=1, keepdims=True)
    valid = (idx >= 0) & (idx < n)
    gathered = np.where(valid, values[np.clip(idx, 0, n - 1)], 0.0)
    return np.sum(weights * gathered, axis=1)


def rcmc(rc: ComplexImage, params: RadarParams, dop: Optional[DopplerEstimate], taps: int = INTERP_TAPS) -> ComplexImage:
    """
    Range cell migration correction in the range-Doppler domain

    Each Doppler row is resampled so energy at R0 + dR(f) moves to R0,
    dR(f) = lambda^2 R0 f^2 / (8 v^2) with f the unambiguous Doppler
    frequency of the row. Output stays in the range-Doppler domain.
    """
    if dop is None:
        raise InvalidInputError("rcmc needs a Doppler estimate")
    _check_time_domain(rc, params, "rcmc")

    spectrum = np.fft.fft(rc.data, axis=0)
    f = doppler_axis(rc.n_az, params.prf, dop.f_dc)
    ranges = slant_ranges(rc)
    columns = np.arange(rc.n_rg, dtype=np.float64)
    to_samples = 2.0 * params.fr / SPEED_OF_LIGHT
    scale = params.wavelength ** 2 / (8.0 * params.v ** 2)

    def block(start: int, stop: int) -> np.ndarray:
        out = np.empty((stop - start, rc.n_rg), dtype=np.complex128)
        for i in range(start, stop):
            shift = scale * ranges * f[i] ** 2 * to_samples
            out[i - start] = interpolate_line(spectrum[i], columns + shift, taps)
        return out

    data = np.vstack(map_row_blocks(block, rc.n_az))
    return rc.with_data(data, domain="range_doppler", doppler_centroid=dop.f_dc)


def azimuth_filter(
    f: np.ndarray,
    ranges: np.ndarray,
    params: RadarParams,
    phase_model: str = "hyperbolic",
) -> np.ndarray:
    """Unit-modulus azimuth matched filter for Doppler rows f and range columns"""
    lam, v = params.wavelength, params.v
    if phase_model == "parabolic":
        # exp(-j*pi*f^2/K_a) with K_a = 2 v^2 / (lambda R0)
        phase = -np.pi * lam * ranges[None, :] * f[:, None] ** 2 / (2.0 * v ** 2)
    elif phase_model == "hyperbolic":
        x = (lam * f / (2.0 * v)) ** 2
        if np.any(x >= 1.0):
            raise InvalidInputError("Doppler frequency exceeds 2v/lambda")
        d_minus_one = -x / (1.0 + np.sqrt(1.0 - x))
        phase = (4.0 * np.pi / lam) * ranges[None, :] * d_minus_one[:, None]
    else:
        raise InvalidInputError(f"unknown phase model '{phase_model}'")
    return np.exp(1j * phase)


def azimuth_compress(
    rd: ComplexImage,
    params: RadarParams,
    dop: Optional[DopplerEstimate],
    phase_model: str = "hyperbolic",
    window: str = "none",
) -> ComplexImage:
    """
    Azimuth matched filter per range column, then inverse azimuth FFT

    The point target lands on its zero-Doppler row (modulo n_az) and
    keeps the Doppler-centroid carrier.
    """
    if rd.domain != "range_doppler":
        raise InvalidInputError(f"azimuth_compress expects range-Doppler data, got '{rd.domain}'")
    if dop is None:
        raise InvalidInputError("azimuth_compress needs a Doppler estimate")

    f = doppler_axis(rd.n_az, params.prf, dop.f_dc)
    ranges = slant_ranges(rd)
    taper = None
    if window == "hamming":
        taper = hamming_taper(f - dop.f_dc, params.prf)
    elif window != "none":
        raise InvalidInputError(f"unknown window '{window}'")

    def block(start: int, stop: int) -> np.ndarray:
        product = rd.data[start:stop] * azimuth_filter(f[start:stop], ranges, params, phase_model)
        if taper is not None:
            product = product * taper[start:stop, None]
        return product

    filtered = np.vstack(map_row_blocks(block, rd.n_az))
    data = np.fft.ifft(filtered, axis=0)
    return rd.with_data(data, domain="time", doppler_centroid=dop.f_dc)


# ---------------------------------------------------------------------------
# Chain and quality figures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FocusResult:
    range_compressed: ComplexImage
    doppler: DopplerEstimate
    range_doppler: ComplexImage
    focused: ComplexImage


def focus(
    raw: ComplexImage,
    params: RadarParams,
    n_lines: Optional[int] = None,
    taps: int = INTERP_TAPS,
    threshold_quantile: float = 0.999,
    window: str = "none",
    phase_model: str = "hyperbolic",
) -> FocusResult:
    """Full Range-Doppler chain on a raw echo"""
    rc = range_compress(raw, params, window=window)
    dop = estimate_doppler(rc, params, n_lines=n_lines, threshold_quantile=threshold_quantile)
    rd = rcmc(rc, params, dop, taps=taps)
    focused = azimuth_compress(rd, params, dop, phase_model=phase_model, window=window)
    return FocusResult(range_compressed=rc, doppler=dop, range_doppler=rd, focused=focused)


def impulse_width(line: np.ndarray, index: int, upsample: int = 16) -> float:
    """-3 dB width (samples) of the response peaking near line[index]"""
    n = len(line)
    centred = np.roll(np.asarray(line), n // 2 - index)
    up = np.abs(signal.resample(centred, n * upsample))
    lo = max(0, (n // 2 - 1) * upsample)
    hi = min(len(up), (n // 2 + 1) * upsample + 1)
    p = lo + int(np.argmax(up[lo:hi]))
    half = up[p] / np.sqrt(2.0)
    if half == 0:
        return float("nan")

    right = p
    while right + 1 < len(up) and up[right + 1] >= half:
        right += 1
    left = p
    while left - 1 >= 0 and up[left - 1] >= half:
        left -= 1

    right_x = float(right)
    if right + 1 < len(up):
        right_x += (up[right] - half) / (up[right] - up[right + 1])
    left_x = float(left)
    if left - 1 >= 0:
        left_x -= (up[left] - half) / (up[left] - up[left - 1])
    return (right_x - left_x) / upsample


def measure_focus(img: ComplexImage, stage_seconds: Optional[Dict[str, float]] = None, upsample: int = 16) -> FocusReport:
    """Peak position and -3 dB widths of the brightest response"""
    mag = np.abs(img.data)
    row, col = np.unravel_index(int(np.argmax(mag)), mag.shape)
    if mag[row, col] == 0:
        raise InvalidInputError("cannot measure focus on an all-zero image")
    return FocusReport(
        stage_seconds=dict(stage_seconds or {}),
        peak_row=int(row),
        peak_col=int(col),
        peak_magnitude=float(mag[row, col]),
        range_width=impulse_width(img.data[row, :], int(col), upsample),
        azimuth_width=impulse_width(img.data[:, col], int(row), upsample),
    )
