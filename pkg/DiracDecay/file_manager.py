"""
Manages file system operations for run results:
- Threshold reports as Markdown with YAML front-matter.
- Binary kernel snapshots (grid operators and probe-pair kernels).
- Decay series and fit tables as CSV, plus gnuplot stubs.
- The run manifest.
I/O failures are logged and reported through a False/None return.
"""
import csv
import glob
import logging
import os
import platform

import numpy as np
import scipy
import yaml

from . import APP_NAME, VERSION
from .discretize import BlockOperator, Grid2
from .utils import (dump_yaml, generate_yaml_front_matter, get_current_timestamp,
                    parse_yaml_front_matter)

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"DDSNAP01"
PAIR_MAGIC = b"DDPAIR01"
SNAPSHOT_HEADER = np.dtype([('magic', 'S8'), ('N', '<i8'), ('L', '<f8'), ('tag', 'S16'),
                            ('lam', '<f8'), ('t', '<f8')])
PAIR_HEADER = np.dtype([('magic', 'S8'), ('P', '<i8'), ('t', '<f8'), ('tag', 'S16')])
DECAY_COLUMNS = ["t", "norm", "gamma", "provenance"]
FIT_COLUMNS = ["gamma", "provenance", "exponent", "stderr", "t_min", "t_max"]


def _ensure_parent(path: str):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def _tag_bytes(tag: str) -> bytes:
    return (tag or "").encode('ascii', errors='replace')[:16]


# --- Threshold reports ------------------------------------------------------

def report_markdown(report, grid: Grid2 | None = None, extra: dict | None = None) -> str:
    """Front-matter (machine-readable) plus a human-readable body."""
    metadata = {'title': f"Threshold report: {report.classification}",
                'created': get_current_timestamp()}
    metadata.update(report.summary())
    if grid is not None:
        metadata['grid'] = {'n_per_axis': grid.n_per_axis, 'L': grid.L}
    if extra:
        metadata.update(extra)
    lines = [f"# Zero-energy classification: **{report.classification}**", "",
             f"- rank S1 = {report.rank_S1}, rank S2 = {report.rank_S2}, "
             f"rank Q = {report.rank_Q}",
             f"- σ_min(T) = {report.sigma_min_T:.3e} (kernel tolerance {report.tolerance:.3e})",
             ""]
    if report.rank_S1:
        lines += ["| φ | residual | moment | tail ratio |", "|---|---|---|---|"]
        for j, (res, mom, tail) in enumerate(zip(report.residuals, report.moments,
                                                 report.tail_ratios)):
            lines.append(f"| {j} | {res:.3e} | {mom:.3e} | {tail:.3e} |")
        lines.append("")
    return f"{generate_yaml_front_matter(metadata)}\n" + "\n".join(lines)


def save_report(report, path: str, grid: Grid2 | None = None, extra: dict | None = None) -> bool:
    try:
        _ensure_parent(path)
        with open(path, 'w', encoding='utf-8') as f:
            f.write(report_markdown(report, grid, extra))
        return True
    except OSError as e:
        logger.error("Error saving report %s: %s", path, e)
        return False


def load_report(path: str) -> dict | None:
    """Front-matter of a saved report, with the body under 'body'."""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            metadata, body = parse_yaml_front_matter(f.read())
    except OSError as e:
        logger.error("Error loading report %s: %s", path, e)
        return None
    if 'classification' not in metadata:
        logger.error("Report %s has no classification front-matter", path)
        return None
    metadata['body'] = body
    return metadata


def scan_reports(directory: str) -> list[dict]:
    reports = []
    if not os.path.isdir(directory):
        logger.error("Report directory '%s' not found or not a directory", directory)
        return reports
    for md_file in sorted(glob.glob(os.path.join(directory, "*.md"))):
        loaded = load_report(md_file)
        if loaded:
            loaded['path'] = md_file
            reports.append(loaded)
    return reports


# --- Snapshots --------------------------------------------------------------

def _interleave(blocks: np.ndarray) -> np.ndarray:
    flat = np.ascontiguousarray(blocks, dtype=np.complex128).reshape(-1)
    return np.stack([flat.real, flat.imag], axis=-1).astype('<f8').reshape(-1)


def _deinterleave(data: np.ndarray, shape) -> np.ndarray:
    pairs = data.reshape(-1, 2)
    return (pairs[:, 0] + 1j * pairs[:, 1]).reshape(shape)


def save_operator_snapshot(op: BlockOperator, path: str, t: float = float('nan')) -> bool:
    """Grid operator as kernel values K(x_i, x_j) (quadrature weights removed)."""
    header = np.zeros(1, dtype=SNAPSHOT_HEADER)
    header['magic'], header['N'], header['L'] = SNAPSHOT_MAGIC, op.grid.N, op.grid.L
    header['tag'] = _tag_bytes(op.tag)
    header['lam'] = float('nan') if op.lam is None else float(op.lam)
    header['t'] = t
    try:
        _ensure_parent(path)
        with open(path, 'wb') as f:
            f.write(header.tobytes())
            f.write(_interleave(op.kernel_blocks()).tobytes())
        return True
    except OSError as e:
        logger.error("Error writing snapshot %s: %s", path, e)
        return False


def load_operator_snapshot(path: str) -> dict | None:
    try:
        with open(path, 'rb') as f:
            raw = f.read()
    except OSError as e:
        logger.error("Error reading snapshot %s: %s", path, e)
        return None
    size = SNAPSHOT_HEADER.itemsize
    if len(raw) < size or raw[:len(SNAPSHOT_MAGIC)] != SNAPSHOT_MAGIC:
        logger.error("%s is not a %s file", path, SNAPSHOT_MAGIC.decode())
        return None
    header = np.frombuffer(raw[:size], dtype=SNAPSHOT_HEADER)
    N = int(header['N'][0])
    data = np.frombuffer(raw[size:], dtype='<f8')
    if data.size != N * N * 8:
        logger.error("Snapshot %s is truncated", path)
        return None
    return {'N': N, 'L': float(header['L'][0]), 'tag': header['tag'][0].decode('ascii'),
            'lam': float(header['lam'][0]), 't': float(header['t'][0]),
            'blocks': _deinterleave(data, (N, N, 2, 2))}


def save_pair_snapshot(kernel, path: str) -> bool:
    """Probe-pair kernel (EvolutionKernel or FiniteRankTerm)."""
    tag = getattr(kernel, 'provenance', 'finite_rank')
    P = len(kernel.blocks)
    header = np.zeros(1, dtype=PAIR_HEADER)
    header['magic'], header['P'], header['t'] = PAIR_MAGIC, P, kernel.t
    header['tag'] = _tag_bytes(tag)
    coords = np.hstack([kernel.x, kernel.y]).astype('<f8')
    try:
        _ensure_parent(path)
        with open(path, 'wb') as f:
            f.write(header.tobytes())
            f.write(coords.tobytes())
            f.write(_interleave(kernel.blocks).tobytes())
        return True
    except OSError as e:
        logger.error("Error writing pair snapshot %s: %s", path, e)
        return False


def load_pair_snapshot(path: str) -> dict | None:
    try:
        with open(path, 'rb') as f:
            raw = f.read()
    except OSError as e:
        logger.error("Error reading pair snapshot %s: %s", path, e)
        return None
    size = PAIR_HEADER.itemsize
    if len(raw) < size or raw[:len(PAIR_MAGIC)] != PAIR_MAGIC:
        logger.error("%s is not a %s file", path, PAIR_MAGIC.decode())
        return None
    header = np.frombuffer(raw[:size], dtype=PAIR_HEADER)
    P = int(header['P'][0])
    data = np.frombuffer(raw[size:], dtype='<f8')
    if data.size != P * 4 + P * 8:
        logger.error("Pair snapshot %s is truncated", path)
        return None
    coords = data[:P * 4].reshape(P, 4)
    return {'P': P, 't': float(header['t'][0]), 'tag': header['tag'][0].decode('ascii'),
            'x': coords[:, :2].copy(), 'y': coords[:, 2:].copy(),
            'blocks': _deinterleave(data[P * 4:], (P, 2, 2))}


# --- CSV --------------------------------------------------------------------

def save_decay_csv(series_list, path: str) -> bool:
    try:
        _ensure_parent(path)
        with open(path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f)
            writer.writerow(DECAY_COLUMNS)
            for series in series_list:
                for t, norm in series.samples:
                    writer.writerow([repr(t), repr(norm), repr(series.gamma), series.provenance])
        return True
    except OSError as e:
        logger.error("Error writing decay CSV %s: %s", path, e)
        return False


def load_decay_csv(path: str) -> list[dict] | None:
    try:
        with open(path, 'r', newline='', encoding='utf-8') as f:
            rows = list(csv.DictReader(f))
    except OSError as e:
        logger.error("Error reading decay CSV %s: %s", path, e)
        return None
    return [{'t': float(r['t']), 'norm': float(r['norm']), 'gamma': float(r['gamma']),
             'provenance': r['provenance']} for r in rows]


def save_fits_csv(series_list, path: str) -> bool:
    try:
        _ensure_parent(path)
        with open(path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f)
            writer.writerow(FIT_COLUMNS)
            for s in series_list:
                t_min, t_max = s.window
                writer.writerow([s.gamma, s.provenance, s.fit_exponent, s.fit_stderr,
                                 "" if t_min is None else t_min, "" if t_max is None else t_max])
        return True
    except OSError as e:
        logger.error("Error writing fits CSV %s: %s", path, e)
        return False


def gnuplot_stub(csv_name: str, gamma: float, provenance: str) -> str:
    return "\n".join([
        "set logscale xy",
        "set xlabel 't'",
        "set ylabel 'weighted sup norm'",
        "set datafile separator ','",
        f"plot '{csv_name}' every ::1 using "
        f"($3=={gamma!r} && strcol(4) eq '{provenance}' ? $1 : 1/0):2 "
        f"with linespoints title '{provenance}, gamma={gamma}'",
        "",
    ])


def save_gnuplot_stub(path: str, csv_name: str, gamma: float, provenance: str) -> bool:
    try:
        _ensure_parent(path)
        with open(path, 'w', encoding='utf-8') as f:
            f.write(gnuplot_stub(csv_name, gamma, provenance))
        return True
    except OSError as e:
        logger.error("Error writing gnuplot stub %s: %s", path, e)
        return False


# --- Manifest ---------------------------------------------------------------

def build_manifest(config: dict, config_digest: str, command: str, serial: bool,
                   extra: dict | None = None) -> dict:
    manifest = {
        'command': command,
        'config_hash': config_digest,
        'created': get_current_timestamp(),
        'serial': bool(serial),
        'versions': {APP_NAME: VERSION, 'numpy': np.__version__, 'scipy': scipy.__version__,
                     'python': platform.python_version()},
        'config': config,
    }
    if extra:
        manifest.update(extra)
    return manifest


def save_manifest(manifest: dict, path: str) -> bool:
    try:
        _ensure_parent(path)
        with open(path, 'w', encoding='utf-8') as f:
            f.write(dump_yaml(manifest))
        return True
    except (OSError, yaml.YAMLError) as e:
        logger.error("Error writing manifest %s: %s", path, e)
        return False


def load_manifest(path: str) -> dict | None:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        logger.error("Error reading manifest %s: %s", path, e)
        return None
