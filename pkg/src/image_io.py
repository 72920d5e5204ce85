"""
Binary image files and display exports

SARC (complex) and SARM (magnitude) files share one little-endian header:

    magic       4s   b"SARC" or b"SARM"
    version     u8   1
    domain      u8   0 = time, 1 = range_doppler (always 0 for SARM)
    reserved    u16  0
    n_az, n_rg  u32  rows, columns
    t0, dt, eta0, deta, doppler_centroid   f64

followed by n_az * n_rg samples in row-major order, complex128 (<c16) for
SARC and float64 (<f8) for SARM.
"""

import struct
from pathlib import Path
from typing import Union

import numpy as np

from errors import ImageFormatError, InvalidInputError
from logging_conf import logger
from radar_model import ComplexImage, MagnitudeImage

HEADER = struct.Struct("<4sBBHIIddddd")
VERSION = 1
MAGIC_COMPLEX = b"SARC"
MAGIC_MAGNITUDE = b"SARM"
DOMAIN_CODES = {"time": 0, "range_doppler": 1}
MAX_DIM = 2 ** 32 - 1
MAX_PAYLOAD = 2 ** 40

Image = Union[ComplexImage, MagnitudeImage]


def write_image(path: Path, img: Image) -> None:
    """Write a complex or magnitude image; 0-sized images are rejected"""
    if img.n_az == 0 or img.n_rg == 0:
        raise InvalidInputError(f"refusing to write an empty {img.n_az}x{img.n_rg} image")
    if img.n_az > MAX_DIM or img.n_rg > MAX_DIM:
        raise ImageFormatError(f"dimensions {img.n_az}x{img.n_rg} do not fit in u32")

    if isinstance(img, ComplexImage):
        magic, domain, centroid = MAGIC_COMPLEX, DOMAIN_CODES[img.domain], img.doppler_centroid
        payload = np.ascontiguousarray(img.data, dtype="<c16")
    else:
        magic, domain, centroid = MAGIC_MAGNITUDE, 0, 0.0
        payload = np.ascontiguousarray(img.data, dtype="<f8")

    header = HEADER.pack(magic, VERSION, domain, 0, img.n_az, img.n_rg,
                         img.t0, img.dt, img.eta0, img.deta, centroid)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload.tobytes())
    logger.debug(f"Wrote {magic.decode()} {img.n_az}x{img.n_rg} to {path.name}")


def read_image(path: Path) -> Image:
    """
    Read a SARC or SARM file

    Raises:
        ImageFormatError: bad magic or version, truncated or oversized
            payload, dimension overflow
    """
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise ImageFormatError(f"{path}: truncated header ({len(raw)} of {HEADER.size} bytes)")

    magic, version, domain, _, n_az, n_rg, t0, dt, eta0, deta, centroid = HEADER.unpack_from(raw)
    if magic not in (MAGIC_COMPLEX, MAGIC_MAGNITUDE):
        raise ImageFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ImageFormatError(f"{path}: unsupported version {version}")

    complex_file = magic == MAGIC_COMPLEX
    dtype = np.dtype("<c16") if complex_file else np.dtype("<f8")
    expected = n_az * n_rg * dtype.itemsize
    if expected > MAX_PAYLOAD:
        raise ImageFormatError(f"{path}: dimension overflow ({n_az}x{n_rg})")
    if n_az == 0 or n_rg == 0:
        raise ImageFormatError(f"{path}: empty image {n_az}x{n_rg}")

    available = len(raw) - HEADER.size
    if available < expected:
        raise ImageFormatError(f"{path}: truncated payload ({available} of {expected} bytes)")
    if available > expected:
        raise ImageFormatError(f"{path}: {available - expected} trailing bytes after payload")

    data = np.frombuffer(raw, dtype=dtype, count=n_az * n_rg, offset=HEADER.size).reshape(n_az, n_rg)

    if complex_file:
        names = {code: name for name, code in DOMAIN_CODES.items()}
        if domain not in names:
            raise ImageFormatError(f"{path}: unknown domain code {domain}")
        return ComplexImage(data=data.astype(np.complex128), t0=t0, dt=dt, eta0=eta0, deta=deta,
                            domain=names[domain], doppler_centroid=centroid)
    return MagnitudeImage(data=data.astype(np.float64), t0=t0, dt=dt, eta0=eta0, deta=deta)


def read_complex(path: Path) -> ComplexImage:
    img = read_image(path)
    if not isinstance(img, ComplexImage):
        raise ImageFormatError(f"{path}: expected a SARC complex image")
    return img


def read_magnitude(path: Path) -> MagnitudeImage:
    img = read_image(path)
    if not isinstance(img, MagnitudeImage):
        raise ImageFormatError(f"{path}: expected a SARM magnitude image")
    return img


def to_gray_levels(data: np.ndarray, db_floor: float) -> np.ndarray:
    """Map amplitudes to 0..255 over [db_floor, 0] dB relative to the image max"""
    if not db_floor < 0:
        raise InvalidInputError(f"db_floor must be < 0, got {db_floor}")

    levels = np.zeros(data.shape, dtype=np.uint8)
    peak = float(data.max()) if data.size else 0.0
    if peak <= 0:
        return levels

    positive = data > 0
    db = 20.0 * np.log10(data[positive] / peak)
    scaled = 255.0 * (db - db_floor) / (-db_floor)
    levels[positive] = np.clip(np.rint(scaled), 0, 255).astype(np.uint8)
    return levels


def export_pgm(img: MagnitudeImage, path: Path, db_floor: float) -> None:
    """Binary 8-bit PGM (P5) in dB scale"""
    levels = to_gray_levels(img.data, db_floor)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(f"P5\n{img.n_rg} {img.n_az}\n255\n".encode("ascii"))
        f.write(levels.tobytes())


def export_pbm(mask: np.ndarray, path: Path) -> None:
    """Binary PBM (P4) of a boolean mask, 1 (black) marks a detection"""
    mask = np.asarray(mask, dtype=bool)
    n_rows, n_cols = mask.shape
    packed = np.packbits(mask, axis=1)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(f"P4\n{n_cols} {n_rows}\n".encode("ascii"))
        f.write(packed.tobytes())
