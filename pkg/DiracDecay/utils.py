"""
Utility functions for YAML front-matter, timestamps, and config hashing.
"""
import copy
import hashlib
import json
import re
from datetime import datetime, timezone

import numpy as np
import yaml  # PyYAML

# --- YAML Front-matter ---
YAML_FRONT_MATTER_REGEX = re.compile(r'^---\s*\n(.*?\n)^---\s*\n', re.DOTALL | re.MULTILINE)


def parse_yaml_front_matter(file_content: str) -> tuple[dict, str]:
    """
    Parses YAML front-matter from the beginning of a string.
    Returns (metadata_dict, body). Without valid front-matter: ({}, original string).
    """
    match = YAML_FRONT_MATTER_REGEX.match(file_content)
    if match:
        try:
            metadata = yaml.safe_load(match.group(1))
            if not isinstance(metadata, dict):
                metadata = {}
            return metadata, file_content[match.end():]
        except yaml.YAMLError:
            return {}, file_content
    return {}, file_content


def to_plain(value):
    """numpy scalars/arrays and complex numbers → YAML/JSON-safe Python values."""
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, complex):
        return value.real if value.imag == 0 else str(value)
    if isinstance(value, datetime):
        return value.isoformat()
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


def generate_yaml_front_matter(metadata: dict) -> str:
    """YAML front-matter block for a metadata dictionary ('' when empty)."""
    if not metadata:
        return ""
    try:
        yaml_str = yaml.dump(to_plain(metadata), sort_keys=False, allow_unicode=True,
                             default_flow_style=False)
        return f"---\n{yaml_str}---\n"
    except yaml.YAMLError:
        return "---\n# Error generating YAML\n---\n"


def dump_yaml(data) -> str:
    return yaml.dump(to_plain(data), sort_keys=False, allow_unicode=True, default_flow_style=False)


# --- Configuration helpers ---
def deep_merge(base: dict, override: dict, unknown: list | None = None, prefix: str = "") -> dict:
    """
    Copy of base with override merged in section by section. Keys absent from
    base are skipped and reported through `unknown` as dotted paths.
    """
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        path = f"{prefix}{key}"
        if key not in merged:
            if unknown is not None:
                unknown.append(path)
            continue
        if isinstance(merged[key], dict) and isinstance(value, dict):
            merged[key] = deep_merge(merged[key], value, unknown, path + ".")
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def canonical_json(config: dict) -> str:
    return json.dumps(to_plain(config), sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    """sha256 of the canonical JSON form."""
    return hashlib.sha256(canonical_json(config).encode('utf-8')).hexdigest()


# --- Timestamp Utilities ---
def get_current_timestamp() -> str:
    """Current time as an ISO 8601 string (UTC)."""
    return datetime.now(timezone.utc).isoformat(timespec='seconds')


def parse_timestamp(ts_str: str) -> datetime | None:
    if not ts_str:
        return None
    try:
        if ts_str.endswith('Z'):
            ts_str = ts_str[:-1] + '+00:00'
        return datetime.fromisoformat(ts_str)
    except (ValueError, TypeError):
        try:
            return datetime.strptime(ts_str, "%Y-%m-%dT%H:%M:%S").replace(tzinfo=timezone.utc)
        except ValueError:
            return None


def run_directory_name(command: str, timestamp: str | None = None) -> str:
    """e.g. 'evolve-20240715T103000' from an ISO timestamp."""
    dt = parse_timestamp(timestamp or get_current_timestamp())
    stamp = dt.strftime("%Y%m%dT%H%M%S") if dt else "unknown"
    return f"{command}-{stamp}"
