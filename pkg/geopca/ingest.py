"""Data ingestion and persistence: histogram CSVs, sample files, manifests, bundles."""

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .bundle_store import BundleStore
from .errors import BundleError, GeoPCAError, IngestError
from .measures import (
    EmpiricalSample,
    GridConfig,
    Histogram,
    QuantileGrid,
    gaussian_quantile,
    quantile_from_histogram,
    quantile_from_location_scale,
    quantile_from_samples,
)

logger = logging.getLogger(__name__)

HISTOGRAM_HEADER = ("bin_left", "bin_right", "mass")
MASS_SUM_TOLERANCE = 0.01
EXACT_MASS_TOL = 1e-12
RECORD_KINDS = ("histogram", "samples", "parametric")
MANIFEST_VERSION = 1
BUNDLE_FORMAT = "geopca-quantile-bundle"
BUNDLE_VERSION = 1


# ============ FILE LOADERS ============


def _parse_float(text: str, path: Path, line: int, column: str) -> float:
    try:
        return float(text)
    except ValueError as e:
        raise IngestError(f"{path}:{line}: {column} is not a number: {text!r}") from e


def load_histogram_csv(path: Path, open_bin_cap: float = 100.0) -> Histogram:
    """Histogram from a ``bin_left,bin_right,mass`` CSV.

    An empty or ``inf`` right edge on the last row marks an open bin, closed at
    ``open_bin_cap``. Gaps between bins become zero-mass bins. Masses summing
    to within 1% of one are renormalized.
    """
    path = Path(path)
    if not path.exists():
        raise IngestError(f"Histogram file not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as f:
        rows = list(csv.reader(f))
    if not rows or tuple(c.strip() for c in rows[0]) != HISTOGRAM_HEADER:
        raise IngestError(f"{path}: expected header {','.join(HISTOGRAM_HEADER)}")

    bins: List[Tuple[float, float, float]] = []
    body = [(n, r) for n, r in enumerate(rows[1:], start=2) if any(c.strip() for c in r)]
    for index, (line, row) in enumerate(body):
        if len(row) != 3:
            raise IngestError(f"{path}:{line}: expected 3 fields, got {len(row)}")
        left = _parse_float(row[0].strip(), path, line, "bin_left")
        right_text = row[1].strip()
        if right_text in ("", "inf", "+inf") and index == len(body) - 1:
            right = open_bin_cap
            logger.debug("Ingest: open last bin in %s closed at %g", path, open_bin_cap)
        else:
            right = _parse_float(right_text, path, line, "bin_right")
        mass = _parse_float(row[2].strip(), path, line, "mass")
        if not (math.isfinite(left) and math.isfinite(right) and math.isfinite(mass)):
            raise IngestError(f"{path}:{line}: values must be finite")
        if right <= left:
            raise IngestError(f"{path}:{line}: empty bin [{left}, {right}]")
        if mass < 0:
            raise IngestError(f"{path}:{line}: negative mass {mass}")
        if bins and left < bins[-1][1]:
            raise IngestError(f"{path}:{line}: bin overlaps or is out of order")
        if bins and left > bins[-1][1]:
            bins.append((bins[-1][1], left, 0.0))
        bins.append((left, right, mass))
    if not bins:
        raise IngestError(f"{path}: no histogram rows")

    edges = [bins[0][0]] + [b[1] for b in bins]
    masses = np.array([b[2] for b in bins])
    total = float(masses.sum())
    if abs(total - 1.0) > MASS_SUM_TOLERANCE:
        raise IngestError(f"{path}: masses sum to {total!r}, outside 1 +/- {MASS_SUM_TOLERANCE}")
    if abs(total - 1.0) > EXACT_MASS_TOL:
        logger.warning("Ingest: %s masses sum to %.6g; renormalized", path, total)
    return Histogram.normalized(edges, masses)


def load_samples(path: Path) -> EmpiricalSample:
    """Empirical sample from a file with one real per line."""
    path = Path(path)
    if not path.exists():
        raise IngestError(f"Sample file not found: {path}")
    values = []
    with open(path, "r", encoding="utf-8") as f:
        for line, text in enumerate(f, start=1):
            text = text.strip()
            if not text:
                continue
            value = _parse_float(text, path, line, "value")
            if not math.isfinite(value):
                raise IngestError(f"{path}:{line}: non-finite value {text!r}")
            values.append(value)
    if not values:
        raise IngestError(f"{path}: no samples")
    return EmpiricalSample(np.array(values))


# ============ PARAMETRIC RECORDS ============


def _base_quantile(name: str, grid: GridConfig) -> QuantileGrid:
    if name == "normal":
        return gaussian_quantile(grid)
    if name == "uniform":
        return QuantileGrid(grid, 2.0 * grid.knots - 1.0)
    raise IngestError(f"Unknown base measure: {name!r}")


def parametric_quantile(params: Dict[str, Any], grid: GridConfig) -> QuantileGrid:
    """Quantile grid of a parametric record (gaussian or location_scale)."""
    family = params.get("family")
    try:
        if family == "gaussian":
            return gaussian_quantile(grid, float(params.get("mean", 0.0)), float(params.get("sd", 1.0)))
        if family == "location_scale":
            base = _base_quantile(params.get("base", "normal"), grid)
            return quantile_from_location_scale(base, float(params["a"]), float(params["b"]))
    except KeyError as e:
        raise IngestError(f"Parametric record is missing {e.args[0]!r}") from e
    except (TypeError, ValueError) as e:
        raise IngestError(f"Invalid parametric record {params}: {e}") from e
    raise IngestError(f"Unknown parametric family: {family!r}")


# ============ MANIFEST ============


@dataclass
class RecordEntry:
    """One input measure of a dataset."""

    label: str
    kind: str
    source: Optional[str] = None
    params: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"label": self.label, "kind": self.kind}
        if self.source is not None:
            data["source"] = self.source
        if self.params:
            data["params"] = self.params
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RecordEntry":
        if not isinstance(data, dict) or "label" not in data or "kind" not in data:
            raise IngestError(f"Record entry needs 'label' and 'kind': {data!r}")
        entry = cls(
            label=str(data["label"]),
            kind=data["kind"],
            source=data.get("source"),
            params=dict(data.get("params", {})),
        )
        if entry.kind not in RECORD_KINDS:
            raise IngestError(f"Record {entry.label!r}: unknown kind {entry.kind!r}")
        if entry.kind != "parametric" and not entry.source:
            raise IngestError(f"Record {entry.label!r}: kind {entry.kind} needs a source path")
        return entry


@dataclass
class DatasetManifest:
    """Labelled records plus the grid they are materialized on."""

    records: List[RecordEntry] = field(default_factory=list)
    grid: Optional[GridConfig] = None
    created: str = field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds")
    )
    checksum: Optional[str] = None

    def __post_init__(self) -> None:
        labels = [r.label for r in self.records]
        duplicates = sorted({label for label in labels if labels.count(label) > 1})
        if duplicates:
            raise IngestError(f"Duplicate record labels: {', '.join(duplicates)}")

    @property
    def labels(self) -> List[str]:
        return [r.label for r in self.records]

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "version": MANIFEST_VERSION,
            "created": self.created,
            "records": [r.to_dict() for r in self.records],
        }
        if self.grid is not None:
            data["grid"] = grid_to_dict(self.grid)
        if self.checksum is not None:
            data["checksum"] = self.checksum
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DatasetManifest":
        if not isinstance(data, dict):
            raise IngestError("Manifest must be a JSON object")
        version = data.get("version", MANIFEST_VERSION)
        if version != MANIFEST_VERSION:
            raise IngestError(f"Manifest version {version} not supported")
        grid = grid_from_dict(data["grid"]) if data.get("grid") else None
        return cls(
            records=[RecordEntry.from_dict(r) for r in data.get("records", [])],
            grid=grid,
            created=data.get("created", ""),
            checksum=data.get("checksum"),
        )

    @classmethod
    def load(cls, path: Path) -> "DatasetManifest":
        path = Path(path)
        if not path.exists():
            raise IngestError(f"Manifest not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise IngestError(f"Error loading manifest {path}: {e}") from e
        return cls.from_dict(data)

    def save(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)

    def compute_checksum(self, base_dir: Path) -> str:
        """sha256 over every record's metadata and the raw bytes of its source file."""
        digest = hashlib.sha256()
        for record in self.records:
            digest.update(json.dumps(record.to_dict(), sort_keys=True).encode("utf-8"))
            if record.source:
                source = resolve_source(record, base_dir)
                if not source.exists():
                    raise IngestError(f"Record {record.label!r}: source not found: {source}")
                digest.update(source.read_bytes())
        return digest.hexdigest()

    def verify_checksum(self, base_dir: Path) -> str:
        actual = self.compute_checksum(base_dir)
        if self.checksum is not None and self.checksum != actual:
            raise IngestError("Manifest checksum does not match its input files")
        return actual


def grid_to_dict(grid: GridConfig) -> Dict[str, Any]:
    def encode(value: float) -> Any:
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value

    return {"m": grid.m, "omega_lo": encode(grid.omega_lo), "omega_hi": encode(grid.omega_hi)}


def grid_from_dict(data: Dict[str, Any]) -> GridConfig:
    try:
        return GridConfig(
            int(data["m"]),
            float(data.get("omega_lo", -math.inf)),
            float(data.get("omega_hi", math.inf)),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise IngestError(f"Invalid grid description: {data!r}") from e


def resolve_source(record: RecordEntry, base_dir: Path) -> Path:
    source = Path(record.source)
    return source if source.is_absolute() else Path(base_dir) / source


def materialize(
    manifest: DatasetManifest,
    base_dir: Path,
    grid: Optional[GridConfig] = None,
    open_bin_cap: float = 100.0,
) -> Tuple[List[str], List[QuantileGrid]]:
    """Labels and quantile grids of every record, in manifest order."""
    grid = grid or manifest.grid
    if grid is None:
        raise IngestError("No grid given and the manifest does not declare one")
    if not manifest.records:
        raise IngestError("Manifest has no records")
    manifest.verify_checksum(base_dir)

    quantiles = []
    for record in manifest.records:
        try:
            if record.kind == "histogram":
                hist = load_histogram_csv(resolve_source(record, base_dir), open_bin_cap)
                quantiles.append(quantile_from_histogram(hist, grid))
            elif record.kind == "samples":
                sample = load_samples(resolve_source(record, base_dir))
                quantiles.append(quantile_from_samples(sample, grid))
            else:
                quantiles.append(parametric_quantile(record.params, grid))
        except IngestError:
            raise
        except GeoPCAError as e:
            raise IngestError(f"Record {record.label!r}: {e}") from e
    logger.info("Ingest: materialized %d records on m=%d", len(quantiles), grid.m)
    return manifest.labels, quantiles


# ============ BUNDLES ============


def bundle_sidecar(path: Path) -> Path:
    return Path(path).with_suffix(".json")


def file_checksum(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_quantile_bundle(
    data: Sequence[QuantileGrid], labels: Sequence[str], path: Path
) -> Path:
    """Write records to a SQLite bundle plus a JSON sidecar with the payload checksum."""
    if len(data) != len(labels):
        raise BundleError(f"{len(data)} records but {len(labels)} labels")
    if not data:
        raise BundleError("Cannot save an empty bundle")
    if len(set(labels)) != len(labels):
        raise BundleError("Bundle labels must be unique")
    grid = data[0].grid
    for nu in data[1:]:
        if nu.grid != grid:
            raise BundleError("All records of a bundle must share one grid")

    path = Path(path)
    store = BundleStore(path, create=True)
    store.write(list(labels), grid.knots, np.vstack([nu.q for nu in data]), grid.omega)
    sidecar = {
        "format": BUNDLE_FORMAT,
        "version": BUNDLE_VERSION,
        "grid": grid_to_dict(grid),
        "labels": list(labels),
        "columns": {"quantiles": ["record_id", "j", "t", "q"], "records": ["id", "label", "position"]},
        "payload_checksum": file_checksum(path),
    }
    with open(bundle_sidecar(path), "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2)
    logger.info("Bundle: saved %d records to %s", len(data), path)
    return path


def load_quantile_bundle(path: Path) -> Tuple[List[str], List[QuantileGrid]]:
    """Read a bundle back; verifies version, checksum and grid consistency."""
    path = Path(path)
    sidecar_path = bundle_sidecar(path)
    if not sidecar_path.exists():
        raise BundleError(f"Bundle manifest not found: {sidecar_path}")
    try:
        with open(sidecar_path, "r", encoding="utf-8") as f:
            sidecar = json.load(f)
    except json.JSONDecodeError as e:
        raise BundleError(f"Error loading bundle manifest {sidecar_path}: {e}") from e
    if sidecar.get("format") != BUNDLE_FORMAT or sidecar.get("version") != BUNDLE_VERSION:
        raise BundleError(
            f"Unsupported bundle format {sidecar.get('format')!r} version {sidecar.get('version')!r}"
        )
    if not path.exists():
        raise BundleError(f"Bundle not found: {path}")
    if file_checksum(path) != sidecar.get("payload_checksum"):
        raise BundleError(f"Checksum mismatch between {sidecar_path.name} and {path.name}")

    try:
        grid = grid_from_dict(sidecar["grid"])
    except (KeyError, IngestError) as e:
        raise BundleError(f"Bundle manifest has no valid grid: {e}") from e
    store = BundleStore(path)
    m, lo, hi = store.read_grid()
    if (m, lo, hi) != (grid.m, grid.omega_lo, grid.omega_hi):
        raise BundleError("Bundle grid disagrees with its manifest")
    labels, knots, matrix = store.read_records()
    if labels != sidecar.get("labels"):
        raise BundleError("Bundle labels disagree with its manifest")
    if not np.array_equal(knots, grid.knots):
        raise BundleError("Stored knots do not match the grid")
    try:
        quantiles = [QuantileGrid(grid, row) for row in matrix]
    except GeoPCAError as e:
        raise BundleError(f"Bundle holds an invalid record: {e}") from e
    return labels, quantiles
