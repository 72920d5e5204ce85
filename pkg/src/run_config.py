"""
Read sarctl run configs

A config is line-oriented `key = value` text with `[section]` headers:

    [radar]          acquisition constants (required)
    [scene]          grid size, beam Doppler centroid, clutter (required)
    [target.<name>]  point target, by (r0, eta_c) or by focused (row, col)
    [ship.<name>]    extended target footprint
    [focus] [despeckle] [stats] [cfar] [run]   optional
"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Type

from pydantic import BaseModel, ValidationError

from errors import ConfigError, InvalidInputError
from logging_conf import logger
from radar_model import target_at
from schemas import (
    CfarConfig, ClutterSpec, DespeckleConfig, FocusConfig, PipelineConfig,
    RadarParams, RunConfig, SceneConfig, SceneTarget, ShipSpec, StatsConfig,
)
from utils_text import join_names, parse_cfg_text

REQUIRED_SECTIONS = ("radar", "scene")
OPTIONAL_SECTIONS: Dict[str, Type[BaseModel]] = {
    "focus": FocusConfig,
    "despeckle": DespeckleConfig,
    "stats": StatsConfig,
    "cfar": CfarConfig,
    "run": RunConfig,
}
CLUTTER_KEYS = {"clutter_family": "family", "clutter_p1": "p1", "clutter_p2": "p2"}
PLACEMENT_KEYS = ("row", "col")

Entries = Dict[str, Tuple[str, int]]


def _value(raw: str) -> Optional[str]:
    return None if raw.lower() == "none" else raw


def _to_config_error(exc: ValidationError, section: str, entries: Entries, header_line: Optional[int],
                     aliases: Optional[Dict[str, str]] = None) -> ConfigError:
    """Name the first failing field and the line it was set on"""
    reverse = {v: k for k, v in (aliases or {}).items()}
    first = exc.errors()[0]
    loc = [str(part) for part in first.get("loc", ())]
    key = reverse.get(loc[0], loc[0]) if loc else None
    line = entries[key][1] if key in entries else header_line
    where = f"[{section}] {key}" if key else f"[{section}]"
    return ConfigError(f"{where}: {first['msg']}", line=line, field=key)


def _build(model: Type[BaseModel], section: str, entries: Entries, header_line: Optional[int],
           extra: Optional[Dict[str, Any]] = None, aliases: Optional[Dict[str, str]] = None):
    values: Dict[str, Any] = {}
    for key, (raw, _) in entries.items():
        values[(aliases or {}).get(key, key)] = _value(raw)
    values.update(extra or {})
    try:
        return model(**values)
    except ValidationError as e:
        raise _to_config_error(e, section, entries, header_line, aliases) from e


def _split(entries: Entries, keys) -> Tuple[Entries, Entries]:
    inside = {k: v for k, v in entries.items() if k in keys}
    outside = {k: v for k, v in entries.items() if k not in keys}
    return inside, outside


def _build_target(name: str, entries: Entries, header_line: int, radar: RadarParams,
                  scene_values: Dict[str, Any]) -> SceneTarget:
    """Point target; (row, col) places it by where it must focus"""
    section = f"target.{name}"
    defaults = {"f_dc": scene_values.get("f_dc", 0.0), "aperture": scene_values.get("aperture")}
    placement, rest = _split(entries, PLACEMENT_KEYS)

    if not placement:
        extra = {k: v for k, v in defaults.items() if k not in rest}
        return _build(SceneTarget, section, rest, header_line, extra=extra)

    if len(placement) != 2 or "r0" in rest or "eta_c" in rest:
        raise ConfigError(f"[{section}] give either row and col, or r0 and eta_c", line=header_line)

    # validate the remaining fields with a placeholder geometry first
    probe = _build(SceneTarget, section, rest, header_line,
                   extra={"r0": 1.0, "eta_c": 0.0, **{k: v for k, v in defaults.items() if k not in rest}})
    try:
        row, col = int(placement["row"][0]), int(placement["col"][0])
    except ValueError as e:
        raise ConfigError(f"[{section}] row and col must be integers", line=placement["row"][1]) from e
    try:
        return target_at(radar, row, col, scene_values["n_az"], probe.amplitude, f_dc=probe.f_dc,
                         phase=probe.phase, eta0=scene_values.get("eta0", 0.0), aperture=probe.aperture)
    except InvalidInputError as e:
        raise ConfigError(f"[{section}] {e}", line=header_line) from e


def parse_config(text: str, base_dir: Optional[Path] = None) -> PipelineConfig:
    """
    Build a PipelineConfig from config text

    Raises:
        ConfigError: parse or validation failure with line and field
    """
    sections, header_lines = parse_cfg_text(text)

    missing = [s for s in REQUIRED_SECTIONS if s not in sections]
    if missing:
        raise ConfigError(f"missing required sections {join_names(missing)}")

    for name, line in header_lines.items():
        kind = name.split(".", 1)[0]
        if name not in REQUIRED_SECTIONS and name not in OPTIONAL_SECTIONS and kind not in ("target", "ship"):
            raise ConfigError(f"unknown section [{name}]", line=line)
        if kind in ("target", "ship") and "." not in name:
            raise ConfigError(f"section [{name}] needs a name, e.g. [{name}.a]", line=line)

    radar = _build(RadarParams, "radar", sections["radar"], header_lines["radar"])

    clutter_entries, scene_entries = _split(sections["scene"], CLUTTER_KEYS)
    clutter = None
    if clutter_entries:
        clutter = _build(ClutterSpec, "scene", clutter_entries, header_lines["scene"], aliases=CLUTTER_KEYS)

    # scene fields without targets, so targets can use its defaults
    scene_probe = _build(SceneConfig, "scene", scene_entries, header_lines["scene"])
    scene_values = scene_probe.model_dump()

    targets: List[SceneTarget] = []
    ships: List[ShipSpec] = []
    for name, entries in sections.items():
        if name.startswith("target."):
            targets.append(_build_target(name.split(".", 1)[1], entries, header_lines[name], radar, scene_values))
        elif name.startswith("ship."):
            ships.append(_build(ShipSpec, name, entries, header_lines[name]))

    ingest = scene_probe.ingest
    if ingest is not None and base_dir is not None and not ingest.is_absolute():
        ingest = base_dir / ingest

    scene = scene_probe.model_copy(update={"clutter": clutter, "targets": targets, "ships": ships, "ingest": ingest})

    optional: Dict[str, Any] = {}
    for name, model in OPTIONAL_SECTIONS.items():
        if name in sections:
            optional[name] = _build(model, name, sections[name], header_lines[name])

    try:
        cfg = PipelineConfig(radar=radar, scene=scene, **optional)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e.errors()[0]['msg']}") from e

    logger.debug(f"Config: {scene.n_az}x{scene.n_rg}, {len(targets)} targets, {len(ships)} ships")
    return cfg


def read_config(path: Path) -> PipelineConfig:
    """
    Read and validate a config file

    Raises:
        FileNotFoundError: path does not exist
        ConfigError: parse or validation failure
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_config(text, base_dir=path.parent)
