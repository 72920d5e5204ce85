import re
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

from errors import ConfigError

SECTION_RE = re.compile(r'^\[\s*([A-Za-z_][\w.-]*)\s*\]$')
KEY_VALUE_RE = re.compile(r'^([A-Za-z_][\w]*)\s*=\s*(.*)$')

# section -> key -> (raw value, line number)
ParsedConfig = Dict[str, Dict[str, Tuple[str, int]]]


def strip_comment(line: str) -> str:
    """Drop a trailing '#' or ';' comment and surrounding whitespace"""
    for marker in ('#', ';'):
        idx = line.find(marker)
        if idx != -1:
            line = line[:idx]
    return line.strip()


def parse_cfg_text(text: str) -> Tuple[ParsedConfig, Dict[str, int]]:
    """
    Tokenize line-oriented `key = value` text with `[section]` headers

    Returns:
        (sections, header line numbers)

    Raises:
        ConfigError: with the offending line number
    """
    sections: ParsedConfig = {}
    header_lines: Dict[str, int] = {}
    current: Optional[str] = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = strip_comment(raw)
        if not line:
            continue

        match = SECTION_RE.match(line)
        if match:
            current = match.group(1).lower()
            if current in sections:
                raise ConfigError(f"duplicate section [{current}]", line=lineno)
            sections[current] = {}
            header_lines[current] = lineno
            continue

        match = KEY_VALUE_RE.match(line)
        if not match:
            raise ConfigError(f"cannot parse '{raw.strip()}'", line=lineno)
        if current is None:
            raise ConfigError(f"key '{match.group(1)}' appears before any [section]", line=lineno)

        key, value = match.group(1).lower(), match.group(2).strip()
        if not value:
            raise ConfigError(f"empty value for '{key}'", line=lineno, field=key)
        if key in sections[current]:
            raise ConfigError(f"duplicate key '{key}' in [{current}]", line=lineno, field=key)
        sections[current][key] = (value, lineno)

    return sections, header_lines


def parse_roi(text: str) -> Tuple[int, int, int, int]:
    """Parse 'r0,c0,r1,c1' into a half-open row/column rectangle"""
    parts = [p.strip() for p in text.split(',')]
    if len(parts) != 4 or not all(re.fullmatch(r'\d+', p) for p in parts):
        raise ValueError(f"roi must be four non-negative integers 'r0,c0,r1,c1', got '{text}'")
    r0, c0, r1, c1 = (int(p) for p in parts)
    if r1 <= r0 or c1 <= c0:
        raise ValueError(f"roi '{text}' is empty")
    return r0, c0, r1, c1


def format_key_values(values: Mapping[str, object]) -> str:
    """Render a `key = value` block; floats keep full precision"""
    lines: List[str] = []
    for key, value in values.items():
        if isinstance(value, float):
            rendered = repr(value)
        elif value is None:
            rendered = "none"
        else:
            rendered = str(value)
        lines.append(f"{key} = {rendered}")
    return "\n".join(lines) + "\n"


def parse_key_values(text: str) -> Dict[str, str]:
    """Inverse of format_key_values; 'none' maps to an empty string"""
    result: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        match = KEY_VALUE_RE.match(line)
        if not match:
            raise ConfigError(f"cannot parse '{line}'", line=lineno)
        value = match.group(2).strip()
        result[match.group(1)] = "" if value == "none" else value
    return result


def join_names(names: Iterable[str]) -> str:
    return ", ".join(f"[{n}]" for n in names)
