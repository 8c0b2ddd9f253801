"""
Output writers for laboratory results.
Supports JSON reports, CSV grids and cell lists, and PGM images.
"""

import csv
import hashlib
import json
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from .. import __version__
from ..config.settings import Settings
from ..core.errors import ConfigurationError
from ..core.grid import CellSet, ScalarField
from ..core.obstacle import FreezingMap

MANIFEST_NAME = 'manifest.json'


def _to_builtin(value: Any) -> Any:
    """JSON fallback for numpy scalars, arrays and sets."""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (set, frozenset, tuple)):
        return list(value)
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def _fmt(value: float) -> str:
    return f"{value:.12g}"


class BaseWriter(ABC):
    """Abstract base class for output writers."""

    suffix = ''

    def __init__(self, settings: Optional[Settings] = None):
        self.settings = settings

    @abstractmethod
    def write(self, payload: Any, output_path: str) -> List[str]:
        """Write payload and return the paths written."""
        pass

    def _target(self, output_path: str) -> Path:
        path = Path(output_path)
        if self.suffix and path.suffix != self.suffix:
            path = path.with_suffix(self.suffix)
        path.parent.mkdir(parents=True, exist_ok=True)
        return path


class JSONWriter(BaseWriter):
    """Writer for reports and summaries."""

    suffix = '.json'

    def write(self, payload: Any, output_path: str) -> List[str]:
        path = self._target(output_path)
        try:
            with open(path, 'w', encoding='utf-8') as f:
                json.dump(payload, f, indent=2, sort_keys=True, ensure_ascii=False, default=_to_builtin)
                f.write('\n')
        except (OSError, TypeError, ValueError) as e:
            raise RuntimeError(f"Failed to write JSON file {path}: {str(e)}")
        return [str(path)]


class CSVWriter(BaseWriter):
    """Writer for fields, cell sets, freezing maps and row tables.

    Fields and freezing maps are written one cell per row with index and
    centre columns; freezing maps write the never-freezing sentinel as -1.
    """

    suffix = '.csv'

    def write(self, payload: Any, output_path: str) -> List[str]:
        path = self._target(output_path)
        try:
            with open(path, 'w', encoding='utf-8', newline='') as f:
                writer = csv.writer(f, lineterminator='\n')
                if isinstance(payload, FreezingMap):
                    self._write_cells(writer, payload.U, payload.csv_values(), 's', only_mask=True)
                elif isinstance(payload, ScalarField):
                    self._write_cells(writer, None, payload.values, payload.name or 'value',
                                      geometry=payload.geometry)
                elif isinstance(payload, CellSet):
                    self._write_cells(writer, payload, None, None, only_mask=True)
                elif isinstance(payload, np.ndarray):
                    for row in np.atleast_2d(payload):
                        writer.writerow([_fmt(v) for v in row])
                elif isinstance(payload, Sequence) and payload and isinstance(payload[0], dict):
                    keys = sorted({k for row in payload for k in row})
                    writer.writerow(keys)
                    for row in payload:
                        writer.writerow([self._cell(row.get(k, '')) for k in keys])
                else:
                    raise TypeError(f"unsupported CSV payload {type(payload).__name__}")
        except (OSError, TypeError) as e:
            raise RuntimeError(f"Failed to write CSV file {path}: {str(e)}")
        return [str(path)]

    @staticmethod
    def _cell(value: Any) -> str:
        if isinstance(value, (float, np.floating)):
            return _fmt(float(value))
        return str(value)

    def _write_cells(self, writer, cells: Optional[CellSet], values: Optional[np.ndarray],
                     column: Optional[str], only_mask: bool = False, geometry=None):
        geometry = geometry or cells.geometry
        axes = 'ij'[:geometry.dim]
        coords = 'xy'[:geometry.dim]
        writer.writerow(list(axes) + list(coords) + ([column] if column else []))
        mask = cells.mask if only_mask else np.ones(geometry.shape, dtype=bool)
        centers = geometry.centers()
        for index in np.argwhere(mask):
            index = tuple(int(i) for i in index)
            row = [str(i) for i in index] + [_fmt(c[index]) for c in centers]
            if values is not None:
                row.append(_fmt(values[index]))
            writer.writerow(row)


class PGMWriter(BaseWriter):
    """Writer for binary P5 images.

    Cell sets become 0/255 masks, fields 8-bit heatmaps scaled to their
    range. A list of arrays is written as a numbered sequence. Image rows
    run from the top (largest y) down.
    """

    suffix = '.pgm'

    def write(self, payload: Any, output_path: str) -> List[str]:
        path = self._target(output_path)
        if isinstance(payload, (list, tuple)):
            written = []
            for index, frame in enumerate(payload):
                frame_path = path.with_name(f"{path.stem}_{index:04d}.pgm")
                written.extend(self.write(frame, str(frame_path)))
            return written
        try:
            image = self._to_image(payload)
            with open(path, 'wb') as f:
                f.write(f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode('ascii'))
                f.write(image.tobytes())
        except (OSError, TypeError, ValueError) as e:
            raise RuntimeError(f"Failed to write PGM file {path}: {str(e)}")
        return [str(path)]

    @staticmethod
    def _to_image(payload: Any) -> np.ndarray:
        if isinstance(payload, CellSet):
            values = payload.mask.astype(float)
            lo, hi = 0.0, 1.0
        else:
            values = payload.values if isinstance(payload, ScalarField) else np.asarray(payload, dtype=float)
            finite = values[np.isfinite(values)]
            lo = float(finite.min()) if finite.size else 0.0
            hi = float(finite.max()) if finite.size else 1.0
            values = np.where(np.isfinite(values), values, hi)
        if values.ndim == 1:
            values = values[:, None]
        span = hi - lo if hi > lo else 1.0
        scaled = np.clip(np.rint(255.0 * (values - lo) / span), 0, 255).astype(np.uint8)
        return np.ascontiguousarray(scaled.T[::-1])


class OutputWriterFactory:
    """Factory for creating output writers."""

    def __init__(self, settings: Optional[Settings] = None):
        self.settings = settings
        self._writers = {
            'json': JSONWriter,
            'csv': CSVWriter,
            'pgm': PGMWriter,
        }

    def create_writer(self, format_type: str) -> BaseWriter:
        """Create writer for specified format."""
        format_type = format_type.lower()

        if format_type not in self._writers:
            raise ValueError(f"Unsupported output format: {format_type}. "
                             f"Supported formats: {list(self._writers.keys())}")

        writer_class = self._writers[format_type]
        return writer_class(self.settings)

    def get_supported_formats(self) -> list:
        """Get list of supported output formats."""
        return list(self._writers.keys())


# ---------------------------------------------------------------------------
# Run manifests
# ---------------------------------------------------------------------------

def file_sha256(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 16), b''):
            digest.update(block)
    return digest.hexdigest()


def config_hash(config: Dict[str, Any]) -> str:
    text = json.dumps(config, sort_keys=True, default=_to_builtin)
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def run_id(command: str, config: Dict[str, Any]) -> str:
    """``<command>-<first 8 hex digits of the config hash>``."""
    return f"{command}-{config_hash(config)[:8]}"


@dataclass
class RunManifest:
    """Everything needed to re-run a command and check its outputs."""
    command: str
    config: Dict[str, Any]
    seed: Optional[int] = None
    grid: Dict[str, Any] = field(default_factory=dict)
    tolerances: Dict[str, Any] = field(default_factory=dict)
    streams: Dict[str, Any] = field(default_factory=dict)
    version: str = __version__
    outputs: Dict[str, str] = field(default_factory=dict)
    created_at: str = ''

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def write_manifest(manifest: RunManifest, directory: Union[str, Path]) -> str:
    directory = Path(directory)
    if not manifest.created_at:
        manifest.created_at = datetime.now().isoformat(timespec='seconds')
    return JSONWriter().write(manifest.to_dict(), str(directory / MANIFEST_NAME))[0]


def load_manifest(path: Union[str, Path]) -> RunManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise RuntimeError(f"Failed to read manifest {path}: {str(e)}")
    return RunManifest(**data)


def verify_manifest(path: Union[str, Path]) -> Dict[str, bool]:
    """Re-hash every recorded output next to the manifest."""
    path = Path(path)
    directory = path if path.is_dir() else path.parent
    manifest = load_manifest(path)
    results = {}
    for name, digest in sorted(manifest.outputs.items()):
        target = directory / name
        results[name] = target.exists() and file_sha256(target) == digest
    return results


class RunDirectory:
    """``<root>/<run-id>/`` plus the hashes of everything written into it.

    Only ``formats`` are written; JSON stays enabled for reports. Payloads in
    a disabled format are listed in ``skipped``.
    """

    def __init__(self, root: Union[str, Path], command: str, config: Dict[str, Any],
                 settings: Optional[Settings] = None, formats: Optional[Sequence[str]] = None):
        self.command = command
        self.config = config
        self.run_id = run_id(command, config)
        self.path = Path(root) / self.run_id
        self.factory = OutputWriterFactory(settings)
        supported = self.factory.get_supported_formats()
        requested = [f.lower() for f in (formats or supported)]
        unknown = sorted(set(requested) - set(supported))
        if unknown:
            raise ConfigurationError(f"unsupported output formats {unknown}; expected a subset of {supported}")
        self.formats = set(requested) | {'json'}
        self.path.mkdir(parents=True, exist_ok=True)
        self.outputs: Dict[str, str] = {}
        self.skipped: List[str] = []

    def write(self, format_type: str, name: str, payload: Any) -> List[str]:
        if format_type.lower() not in self.formats:
            self.skipped.append(name)
            return []
        writer = self.factory.create_writer(format_type)
        written = writer.write(payload, str(self.path / name))
        for item in written:
            self.outputs[Path(item).name] = file_sha256(item)
        return written

    def finalize(self, seed: Optional[int] = None, grid: Optional[Dict[str, Any]] = None,
                 tolerances: Optional[Dict[str, Any]] = None,
                 streams: Optional[Dict[str, Any]] = None) -> RunManifest:
        manifest = RunManifest(self.command, self.config, seed, grid or {}, tolerances or {}, streams or {},
                               outputs=dict(sorted(self.outputs.items())))
        write_manifest(manifest, self.path)
        return manifest
