"""
Run artifacts: CSV tables, the NDJSON record stream, fit reports, CSPF
snapshots, SVG figures and the manifest that hashes them.

Every artifact carries the resolved configuration and the code version, and
filenames depend only on the artifact names, so reruns with the same
configuration and seed write identical bytes.
"""
import csv
import hashlib
import json
import logging
import math
from enum import Enum
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from . import __version__
from .config import ConfigBundle, config_json
from .spectral_core import SpectralField, write_snapshot

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'
RECORDS_NAME = 'records.ndjson'
FITS_NAME = 'fits.json'

# fixed salt so matplotlib's SVG element ids repeat between runs
SVG_HASH_SALT = 'shearflow'


class Table(NamedTuple):
    columns: Sequence[str]
    rows: Sequence[Sequence]


class Snapshot(NamedTuple):
    field: SpectralField
    metadata: Dict


class RunResults(NamedTuple):
    """
    Everything a command produces.

    tables: artifact stem -> Table, written as <stem>.csv
    records: DiagnosticsRecord stream, written as records.ndjson
    fits: JSON-able report, written as fits.json
    snapshots: stem -> Snapshot, written as <stem>.cspf
    figures: stem -> matplotlib Figure, written as <stem>.svg
    """
    tables: Optional[Dict[str, Table]] = None
    records: Optional[Sequence] = None
    fits: Optional[Dict] = None
    snapshots: Optional[Dict[str, Snapshot]] = None
    figures: Optional[Dict] = None


def to_jsonable(value):
    """Plain JSON types; non-finite floats become null"""
    if isinstance(value, Enum):
        return value.value
    if hasattr(value, '_asdict'):
        return {key: to_jsonable(item) for key, item in value._asdict().items()}
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(item) for item in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, Path):
        return str(value)
    return value


def format_cell(value) -> str:
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float):
        return format(value, '.17g')
    return str(value)


def header_lines(bundle: ConfigBundle) -> List[str]:
    return [f"# shearflow {__version__}", f"# config {config_json(bundle.resolved)}"]


def claim_directory(out_dir: Union[str, Path]) -> Path:
    """
    The directory a run writes into: out_dir itself, or the first run-N
    subdirectory (N >= 2) without a manifest when out_dir already holds one.
    """
    out_dir = Path(out_dir)
    target = out_dir
    suffix = 1
    while (target / MANIFEST_NAME).exists():
        suffix += 1
        target = out_dir / f"run-{suffix}"
    target.mkdir(parents=True, exist_ok=True)
    if target != out_dir:
        logger.info("%s already holds a run, writing to %s", out_dir, target)
    return target


def write_csv(path: Path, table: Table, bundle: ConfigBundle) -> Path:
    """RFC 4180 CSV preceded by '#' header lines"""
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        for line in header_lines(bundle):
            handle.write(line + '\r\n')
        writer = csv.writer(handle)
        writer.writerow(list(table.columns))
        for row in table.rows:
            if len(row) != len(table.columns):
                raise ValueError(f"{path.name}: row of {len(row)} cells under {len(table.columns)} columns")
            writer.writerow([format_cell(cell) for cell in row])
    return path


def _dumps(value) -> str:
    return json.dumps(to_jsonable(value), ensure_ascii=False, allow_nan=False)


def write_records(path: Path, records: Sequence, bundle: ConfigBundle) -> Path:
    """One header object, then one JSON object per record"""
    header = {'header': {'version': __version__, 'config': bundle.resolved}}
    with open(path, 'w', encoding='utf-8', newline='\n') as handle:
        handle.write(_dumps(header) + '\n')
        for entry in records:
            handle.write(_dumps(entry) + '\n')
    return path


def read_records(path: Union[str, Path]) -> Tuple[Dict, List[Dict]]:
    """Header and record dicts of a records.ndjson file"""
    header = {}
    records = []
    with open(path, encoding='utf-8') as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            entry = json.loads(line)
            if number == 1 and 'header' in entry:
                header = entry['header']
            else:
                records.append(entry)
    return header, records


def write_fits(path: Path, fits: Dict, bundle: ConfigBundle) -> Path:
    document = {'version': __version__, 'config': bundle.resolved, 'fits': fits}
    text = json.dumps(to_jsonable(document), ensure_ascii=False, allow_nan=False, indent=2, sort_keys=True)
    path.write_text(text + '\n', encoding='utf-8')
    return path


def write_figure(path: Path, figure, bundle: ConfigBundle) -> Path:
    import matplotlib
    matplotlib.rcParams['svg.hashsalt'] = SVG_HASH_SALT
    metadata = {'Date': None, 'Creator': f"shearflow {__version__}",
                'Description': config_json(bundle.resolved)}
    figure.savefig(path, format='svg', metadata=metadata)
    return path


def sha256_of(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


def write_outputs(results: RunResults, out_dir: Union[str, Path], bundle: ConfigBundle) -> Dict:
    """
    Writes every artifact of a run and its manifest.

    Args:
        results: tables, records, fits, snapshots and figures to write
        out_dir: output directory; a run-N subdirectory is used if it already holds a run
        bundle: resolved configuration embedded in every artifact

    Returns:
        Dict: the manifest (version, config, directory, artifacts with sha256 and size)

    Raises:
        OSError: when the directory or a file cannot be written
    """
    target = claim_directory(out_dir)
    written: List[Path] = []

    for stem, table in sorted((results.tables or {}).items()):
        written.append(write_csv(target / f"{stem}.csv", table, bundle))
    if results.records is not None:
        written.append(write_records(target / RECORDS_NAME, results.records, bundle))
    if results.fits is not None:
        written.append(write_fits(target / FITS_NAME, results.fits, bundle))
    for stem, snapshot in sorted((results.snapshots or {}).items()):
        trailer = {'version': __version__, 'config': bundle.resolved, **snapshot.metadata}
        written.append(write_snapshot(snapshot.field, target / f"{stem}.cspf",
                                      trailer=_dumps(trailer).encode('utf-8')))
    for stem, figure in sorted((results.figures or {}).items()):
        written.append(write_figure(target / f"{stem}.svg", figure, bundle))

    manifest = {
        'version': __version__,
        'config': bundle.resolved,
        'directory': str(target),
        'artifacts': [{'name': path.name, 'sha256': sha256_of(path), 'bytes': path.stat().st_size}
                      for path in sorted(written)],
    }
    with open(target / MANIFEST_NAME, 'w', encoding='utf-8') as handle:
        handle.write(json.dumps(to_jsonable(manifest), ensure_ascii=False, indent=2, sort_keys=True) + '\n')
    logger.info("wrote %d artifacts to %s", len(written), target)
    return manifest
