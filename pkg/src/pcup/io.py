"""PLY reading/writing and dataset manifest handling.

PLY support covers ascii and binary_little_endian, vertex positions as
float or double, colors as uint8 or float. Unknown scalar properties are
skipped. Colors are carried internally in [0, 1]; writing quantizes with
round-half-up so identical clouds always produce identical bytes.

A manifest is a JSON file listing dataset entries (id, path, category,
point_count, rates); paths are relative to the manifest's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import core
from .core import ColoredPointCloud, RngSeed
from .errors import IoError, MissingProperty, ParseError

_SCALAR_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


@dataclass
class PlyHeaderInfo:
    """Parsed PLY header: format, vertex count, vertex property table."""

    format: str
    vertex_count: int
    properties: list[tuple[str, str]]


@dataclass
class _Element:
    name: str
    count: int
    properties: list[tuple[str, str]] = field(default_factory=list)
    has_list: bool = False


def _parse_header(stream, path) -> tuple[str, list[_Element]]:
    def next_line() -> str:
        raw = stream.readline()
        if not raw:
            raise ParseError(f"{path}: unexpected end of header")
        return raw.decode("ascii", errors="replace").strip()

    if next_line() != "ply":
        raise ParseError(f"{path}: missing 'ply' magic line")
    fmt = None
    elements: list[_Element] = []
    while True:
        line = next_line()
        if line == "end_header":
            break
        parts = line.split()
        if not parts or parts[0] == "comment" or parts[0] == "obj_info":
            continue
        if parts[0] == "format":
            if len(parts) < 2:
                raise ParseError(f"{path}: malformed format line")
            if parts[1] == "binary_big_endian":
                raise ParseError(f"{path}: big-endian PLY is not supported")
            if parts[1] not in ("ascii", "binary_little_endian"):
                raise ParseError(f"{path}: unknown PLY format {parts[1]!r}")
            fmt = parts[1]
        elif parts[0] == "element":
            if len(parts) != 3:
                raise ParseError(f"{path}: malformed element line {line!r}")
            try:
                count = int(parts[2])
            except ValueError as e:
                raise ParseError(f"{path}: bad element count in {line!r}") from e
            elements.append(_Element(parts[1], count))
        elif parts[0] == "property":
            if not elements:
                raise ParseError(f"{path}: property before any element")
            if parts[1] == "list":
                elements[-1].has_list = True
            else:
                if len(parts) != 3 or parts[1] not in _SCALAR_TYPES:
                    raise ParseError(f"{path}: unsupported property line {line!r}")
                elements[-1].properties.append((parts[2], parts[1]))
    if fmt is None:
        raise ParseError(f"{path}: header has no format line")
    return fmt, elements


def read_ply_header(path) -> PlyHeaderInfo:
    """Parse just the header of a PLY file."""
    try:
        with open(path, "rb") as stream:
            fmt, elements = _parse_header(stream, path)
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    for el in elements:
        if el.name == "vertex":
            return PlyHeaderInfo(fmt, el.count, list(el.properties))
    raise MissingProperty(f"{path}: no vertex element")


def _vertex_dtype(el: _Element) -> np.dtype:
    return np.dtype([(name, "<" + _SCALAR_TYPES[typ]) for name, typ in el.properties])


def _require(el: _Element, path) -> None:
    names = {name for name, _ in el.properties}
    for prop in ("x", "y", "z", "red", "green", "blue"):
        if prop not in names:
            raise MissingProperty(f"{path}: vertex element lacks property {prop!r}")


def _cloud_from_records(rec: np.ndarray, el: _Element, path) -> ColoredPointCloud:
    positions = np.stack(
        [rec["x"].astype(np.float32), rec["y"].astype(np.float32), rec["z"].astype(np.float32)],
        axis=1,
    )
    types = dict(el.properties)
    channels = []
    for prop in ("red", "green", "blue"):
        raw = rec[prop]
        if types[prop] in ("uchar", "uint8"):
            channels.append(raw.astype(np.float32) / np.float32(255.0))
        else:
            # Float-typed colors are taken as already normalized.
            channels.append(np.clip(raw.astype(np.float32), 0.0, 1.0))
    try:
        return ColoredPointCloud(positions, np.stack(channels, axis=1))
    except Exception as e:
        raise ParseError(f"{path}: invalid vertex data ({e})") from e


def read_ply(path) -> ColoredPointCloud:
    """Read a colored point cloud from an ascii or little-endian PLY file."""
    try:
        with open(path, "rb") as stream:
            fmt, elements = _parse_header(stream, path)
            body = stream.read()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e

    vertex = None
    for el in elements:
        if el.name == "vertex":
            vertex = el
            break
        # Elements in front of the vertices must be skipped over, which
        # needs a known per-row size.
        if el.has_list:
            raise ParseError(f"{path}: list-property element {el.name!r} precedes vertices")
    if vertex is None:
        raise MissingProperty(f"{path}: no vertex element")
    if vertex.has_list:
        raise ParseError(f"{path}: list properties in vertex element are not supported")
    _require(vertex, path)
    if vertex.count < 1:
        raise ParseError(f"{path}: empty vertex element")

    if fmt == "ascii":
        lines = body.decode("ascii", errors="replace").splitlines()
        rows = [ln.split() for ln in lines if ln.strip()]
        skip = sum(el.count for el in elements[: elements.index(vertex)])
        rows = rows[skip: skip + vertex.count]
        if len(rows) < vertex.count:
            raise ParseError(f"{path}: expected {vertex.count} vertex rows")
        width = len(vertex.properties)
        rec = np.zeros(vertex.count, dtype=_vertex_dtype(vertex))
        try:
            table = np.asarray([row[:width] for row in rows], dtype=np.float64)
        except ValueError as e:
            raise ParseError(f"{path}: malformed ascii vertex row ({e})") from e
        if table.shape != (vertex.count, width):
            raise ParseError(f"{path}: ragged ascii vertex rows")
        for col, (name, _) in enumerate(vertex.properties):
            rec[name] = table[:, col]
    else:
        offset = 0
        for el in elements:
            if el is vertex:
                break
            offset += _vertex_dtype(el).itemsize * el.count
        dtype = _vertex_dtype(vertex)
        need = offset + dtype.itemsize * vertex.count
        if len(body) < need:
            raise ParseError(f"{path}: binary body too short")
        rec = np.frombuffer(body, dtype=dtype, count=vertex.count, offset=offset)
    return _cloud_from_records(rec, vertex, path)


def quantize_colors(attributes: np.ndarray) -> np.ndarray:
    """[0,1] floats to uint8 by round-half-up (platform independent)."""
    scaled = np.floor(attributes.astype(np.float64) * 255.0 + 0.5)
    return np.clip(scaled, 0, 255).astype(np.uint8)


def write_ply(cloud: ColoredPointCloud, path, format: str = "binary_little_endian"):
    """Write a cloud as PLY with float32 positions and uint8 colors."""
    if format not in ("ascii", "binary_little_endian"):
        raise ValueError(f"unsupported PLY format {format!r}")
    header = (
        "ply\n"
        f"format {format} 1.0\n"
        f"element vertex {cloud.n}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "property uchar red\n"
        "property uchar green\n"
        "property uchar blue\n"
        "end_header\n"
    )
    colors = quantize_colors(cloud.attributes)
    try:
        with open(path, "wb") as stream:
            stream.write(header.encode("ascii"))
            if format == "ascii":
                out = []
                for (x, y, z), (r, g, b) in zip(cloud.positions, colors):
                    out.append(f"{x:.9g} {y:.9g} {z:.9g} {r} {g} {b}\n")
                stream.write("".join(out).encode("ascii"))
            else:
                rec = np.zeros(cloud.n, dtype=np.dtype(
                    [(n, "<f4") for n in "xyz"] + [(n, "u1") for n in ("red", "green", "blue")]
                ))
                rec["x"], rec["y"], rec["z"] = cloud.positions.T
                rec["red"], rec["green"], rec["blue"] = colors.T
                stream.write(rec.tobytes())
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


# ---------------------------------------------------------------------------
# Dataset manifests


@dataclass
class ManifestEntry:
    id: str
    path: str
    category: str
    point_count: int
    rates: dict[int, str] = field(default_factory=dict)


@dataclass
class DatasetManifest:
    root: Path
    entries: list[ManifestEntry] = field(default_factory=list)

    def resolve(self, relative: str) -> Path:
        return self.root / relative


def load_manifest(path) -> DatasetManifest:
    """Load a JSON manifest; entry paths must exist relative to its directory."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as e:
        raise IoError(f"cannot read manifest {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid manifest JSON ({e})") from e
    root = path.parent
    entries = []
    seen = set()
    for row in doc.get("entries", []):
        try:
            entry = ManifestEntry(
                id=str(row["id"]),
                path=str(row["path"]),
                category=str(row.get("category", "")),
                point_count=int(row["point_count"]),
                rates={int(k): str(v) for k, v in row.get("rates", {}).items()},
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"{path}: malformed manifest entry {row!r} ({e})") from e
        if entry.id in seen:
            raise ParseError(f"{path}: duplicate entry id {entry.id!r}")
        seen.add(entry.id)
        for rel in (entry.path, *entry.rates.values()):
            if not (root / rel).exists():
                raise IoError(f"{path}: listed file does not exist: {rel}")
        entries.append(entry)
    return DatasetManifest(root=root, entries=entries)


def save_manifest(manifest: DatasetManifest, path):
    """Write a manifest as JSON (stable key order, load/save idempotent)."""
    doc = {
        "entries": [
            {
                "id": e.id,
                "path": e.path,
                "category": e.category,
                "point_count": e.point_count,
                "rates": {str(k): v for k, v in sorted(e.rates.items())},
            }
            for e in manifest.entries
        ]
    }
    try:
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")
    except OSError as e:
        raise IoError(f"cannot write manifest {path}: {e}") from e


def build_sparse_versions(manifest: DatasetManifest, rates=(4, 8, 12, 16),
                          rng: RngSeed = 0) -> DatasetManifest:
    """Write down-sampled siblings of every entry and register them.

    Each (entry, rate) gets its own deterministic seed, so a rerun with
    the same rng reproduces every file byte for byte.
    """
    for i, entry in enumerate(manifest.entries):
        src = manifest.resolve(entry.path)
        cloud = read_ply(src)
        entry.point_count = cloud.n
        for rate in rates:
            seed = np.random.SeedSequence([int(rng), i, int(rate)])
            sparse = core.random_downsample(cloud, rate, seed)
            out = src.with_name(f"{src.stem}_r{rate}.ply")
            write_ply(sparse, out)
            entry.rates[int(rate)] = str(out.relative_to(manifest.root))
    return manifest
