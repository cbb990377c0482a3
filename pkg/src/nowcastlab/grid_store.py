"""Raster data model and the on-disk dataset format.

A dataset directory looks like::

    <root>/manifest.json
    <root>/<channel>/<timestamp>.raw

Every ``.raw`` file is a headerless row-major array of little-endian float32
values. Timestamps are integer minutes since the epoch.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from scipy import ndimage

CHANNELS = ("precip_mm_per_h", "temp_profile_type", "relief_m")
UNITS = {
    "precip_mm_per_h": "mm/h",
    "temp_profile_type": "category",
    "relief_m": "m",
}
CATEGORICAL = {"temp_profile_type"}
STATIC = {"relief_m"}
DEFAULT_CADENCE = 15
MANIFEST_NAME = "manifest.json"
_DTYPE = np.dtype("<f4")


class DatasetError(ValueError):
    """Raised when a dataset on disk is missing pieces or is inconsistent."""


@dataclass(frozen=True)
class GridGeometry:
    """Regular lat/lon grid. Row 0 is the northern edge.

    ``lon_resolution`` defaults to ``resolution``; it only differs for
    anisotropically resized grids.
    """

    rows: int
    cols: int
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float
    resolution: float
    lon_resolution: float | None = None

    def __post_init__(self):
        # Plain Python scalars keep the geometry JSON-serializable.
        for name in ("rows", "cols"):
            object.__setattr__(self, name, int(getattr(self, name)))
        for name in ("lat_min", "lat_max", "lon_min", "lon_max", "resolution"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.lon_resolution is not None:
            object.__setattr__(self, "lon_resolution", float(self.lon_resolution))
        if self.resolution <= 0 or (self.lon_resolution is not None and self.lon_resolution <= 0):
            raise ValueError("resolution must be positive")
        if not (self.lat_max > self.lat_min and self.lon_max > self.lon_min):
            raise ValueError("empty extent: need lat_max > lat_min and lon_max > lon_min")
        if self.rows != round((self.lat_max - self.lat_min) / self.resolution):
            raise ValueError(f"rows={self.rows} inconsistent with latitude extent and resolution")
        if self.cols != round((self.lon_max - self.lon_min) / self.lon_res):
            raise ValueError(f"cols={self.cols} inconsistent with longitude extent and resolution")

    @property
    def lon_res(self) -> float:
        return self.resolution if self.lon_resolution is None else self.lon_resolution

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @classmethod
    def from_extent(cls, lat_min, lat_max, lon_min, lon_max, resolution) -> "GridGeometry":
        rows = round((lat_max - lat_min) / resolution)
        cols = round((lon_max - lon_min) / resolution)
        return cls(rows, cols, lat_min, lat_max, lon_min, lon_max, resolution)

    @classmethod
    def unit(cls, rows: int, cols: int) -> "GridGeometry":
        """Synthetic grid with 0.01 degree cells anchored at (0, 0)."""
        res = 0.01
        return cls(rows, cols, 0.0, rows * res, 0.0, cols * res, res)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        lats = self.lat_max - (np.arange(self.rows) + 0.5) * self.resolution
        lons = self.lon_min + (np.arange(self.cols) + 0.5) * self.lon_res
        return lats, lons

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["lon_resolution"] is None:
            del d["lon_resolution"]
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "GridGeometry":
        return cls(**d)


# France radar composite footprint: 41.0N-51.5N, 10.5W-6.0E at 0.01 degrees.
FRANCE_GRID = GridGeometry.from_extent(41.0, 51.5, -10.5, 6.0, 0.01)


@dataclass
class RasterFrame:
    timestamp: int
    channel: str
    values: np.ndarray


@dataclass
class FrameSequence:
    """Frames of one channel on a shared geometry at a fixed cadence.

    ``values`` has shape (T, rows, cols).
    """

    channel: str
    geometry: GridGeometry
    timestamps: np.ndarray
    values: np.ndarray
    cadence: int = DEFAULT_CADENCE

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.values = np.asarray(self.values)
        if self.values.ndim != 3:
            raise ValueError("values must have shape (T, rows, cols)")
        if self.values.shape[0] != self.timestamps.shape[0]:
            raise ValueError("one timestamp per frame required")
        if self.values.shape[1:] != self.geometry.shape:
            raise ValueError(
                f"frame shape {self.values.shape[1:]} does not match geometry {self.geometry.shape}"
            )
        check_cadence(self.timestamps, self.cadence)

    def __len__(self):
        return len(self.timestamps)

    def __getitem__(self, i) -> RasterFrame:
        return RasterFrame(int(self.timestamps[i]), self.channel, self.values[i])

    def __eq__(self, other):
        if not isinstance(other, FrameSequence):
            return NotImplemented
        return (
            self.channel == other.channel
            and self.geometry == other.geometry
            and self.cadence == other.cadence
            and np.array_equal(self.timestamps, other.timestamps)
            and self.values.dtype == other.values.dtype
            and np.array_equal(self.values, other.values)
        )

    @classmethod
    def from_frames(cls, frames: Iterable[RasterFrame], geometry: GridGeometry, cadence=DEFAULT_CADENCE):
        frames = list(frames)
        if not frames:
            raise ValueError("no frames")
        channels = {f.channel for f in frames}
        if len(channels) != 1:
            raise ValueError(f"frames mix channels {sorted(channels)}")
        frames.sort(key=lambda f: f.timestamp)
        return cls(
            channel=frames[0].channel,
            geometry=geometry,
            timestamps=[f.timestamp for f in frames],
            values=np.stack([f.values for f in frames]),
            cadence=cadence,
        )


def check_cadence(timestamps, cadence):
    """Raise DatasetError naming the first pair of timestamps that breaks cadence."""
    ts = np.asarray(timestamps, dtype=np.int64)
    if len(ts) < 2:
        return
    gaps = np.diff(ts)
    bad = np.flatnonzero(gaps != cadence)
    if bad.size:
        i = int(bad[0])
        raise DatasetError(
            f"cadence violation: {int(ts[i])} -> {int(ts[i + 1])} "
            f"(gap {int(gaps[i])} min, expected {cadence})"
        )


@dataclass
class DatasetManifest:
    geometry: GridGeometry
    channels: list[str]
    frame_index: list[tuple[int, str, str]]
    units: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "geometry": self.geometry.to_dict(),
            "channels": list(self.channels),
            "frame_index": [[int(t), c, p] for t, c, p in self.frame_index],
            "units": dict(self.units),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DatasetManifest":
        return cls(
            geometry=GridGeometry.from_dict(d["geometry"]),
            channels=list(d["channels"]),
            frame_index=[(int(t), c, p) for t, c, p in d["frame_index"]],
            units=dict(d.get("units", {})),
        )

    def validate(self):
        keys = [(c, t) for t, c, _ in self.frame_index]
        if keys != sorted(keys):
            raise DatasetError("frame_index must be sorted by (channel, timestamp)")
        if len(set(keys)) != len(keys):
            raise DatasetError("frame_index contains duplicate (channel, timestamp) entries")


def _payload_bytes(geometry: GridGeometry) -> int:
    return geometry.rows * geometry.cols * _DTYPE.itemsize


def write_dataset(sequences: Mapping[str, FrameSequence] | Iterable[FrameSequence], root) -> DatasetManifest:
    """Write one raw file per frame plus ``manifest.json`` under ``root``."""
    seqs = list(sequences.values()) if isinstance(sequences, Mapping) else list(sequences)
    seqs = [s for s in seqs if len(s)]
    if not seqs:
        raise ValueError("no frames")
    geometry = seqs[0].geometry
    for s in seqs[1:]:
        if s.geometry != geometry:
            raise ValueError(f"geometry mismatch between channels {seqs[0].channel!r} and {s.channel!r}")
    names = [s.channel for s in seqs]
    if len(set(names)) != len(names):
        raise ValueError("duplicate channel")

    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    index = []
    for seq in sorted(seqs, key=lambda s: s.channel):
        (root / seq.channel).mkdir(exist_ok=True)
        for t, frame in zip(seq.timestamps, seq.values):
            rel = f"{seq.channel}/{int(t)}.raw"
            np.ascontiguousarray(frame, dtype=_DTYPE).tofile(root / rel)
            index.append((int(t), seq.channel, rel))

    manifest = DatasetManifest(
        geometry=geometry,
        channels=sorted(names),
        frame_index=index,
        units={c: UNITS.get(c, "") for c in sorted(names)},
    )
    manifest.validate()
    tmp = root / (MANIFEST_NAME + ".tmp")
    tmp.write_text(json.dumps(manifest.to_dict(), indent=1))
    os.replace(tmp, root / MANIFEST_NAME)
    return manifest


def read_manifest(root) -> DatasetManifest:
    path = Path(root) / MANIFEST_NAME
    if not path.exists():
        raise DatasetError(f"missing manifest: {path}")
    manifest = DatasetManifest.from_dict(json.loads(path.read_text()))
    manifest.validate()
    return manifest


def read_dataset(root, cadence: int = DEFAULT_CADENCE) -> dict[str, FrameSequence]:
    """Load every channel listed in the manifest, checking sizes and cadence."""
    root = Path(root)
    manifest = read_manifest(root)
    nbytes = _payload_bytes(manifest.geometry)
    by_channel: dict[str, list[tuple[int, np.ndarray]]] = {c: [] for c in manifest.channels}
    for t, channel, rel in manifest.frame_index:
        path = root / rel
        if not path.exists():
            raise DatasetError(f"missing frame file: {rel}")
        size = path.stat().st_size
        if size != nbytes:
            raise DatasetError(f"size mismatch for {rel}: {size} bytes, expected {nbytes}")
        arr = np.fromfile(path, dtype=_DTYPE).reshape(manifest.geometry.shape)
        by_channel.setdefault(channel, []).append((t, arr))

    out = {}
    for channel, items in by_channel.items():
        if not items:
            continue
        items.sort(key=lambda it: it[0])
        ts = [t for t, _ in items]
        check_cadence(ts, cadence)
        out[channel] = FrameSequence(
            channel, manifest.geometry, ts, np.stack([a for _, a in items]), cadence
        )
    return out


def resample_to_cadence(seq: FrameSequence, target: int = DEFAULT_CADENCE) -> FrameSequence:
    """Subsample a fine-cadence sequence onto timestamps that are multiples of ``target``.

    Frames whose timestamps fall on the target grid are kept as-is. When the
    input does not contain an exact match (misaligned start), categorical
    channels take the nearest frame in time and metric channels are linearly
    interpolated between the neighbouring frames.
    """
    if target % seq.cadence:
        raise ValueError(f"input cadence {seq.cadence} min does not divide target cadence {target} min")
    if target == seq.cadence:
        return seq
    ts = seq.timestamps
    first = int(math.ceil(ts[0] / target) * target)
    grid = np.arange(first, int(ts[-1]) + 1, target, dtype=np.int64)
    if grid.size == 0:
        raise ValueError("sequence shorter than one target step")
    pos = (grid - ts[0]) / seq.cadence
    lo = np.floor(pos).astype(int)
    frac = pos - lo
    if seq.channel in CATEGORICAL:
        idx = np.clip(np.rint(pos).astype(int), 0, len(ts) - 1)
        values = seq.values[idx]
    else:
        hi = np.minimum(lo + 1, len(ts) - 1)
        f = frac.astype(seq.values.dtype)[:, None, None]
        values = (seq.values[lo] * (1 - f) + seq.values[hi] * f).astype(seq.values.dtype)
    return FrameSequence(seq.channel, seq.geometry, grid, values, target)


def interpolate_relief(values: np.ndarray, source: GridGeometry, target: GridGeometry) -> FrameSequence:
    """Bilinear resampling of a static relief grid onto ``target`` cell centres.

    Centres outside the hull of source cell centres take the edge value.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.shape != source.shape:
        raise ValueError(f"relief shape {values.shape} does not match source geometry {source.shape}")
    eps = 1e-9
    if (
        target.lat_min < source.lat_min - eps
        or target.lat_max > source.lat_max + eps
        or target.lon_min < source.lon_min - eps
        or target.lon_max > source.lon_max + eps
    ):
        raise ValueError("target extent lies outside the source extent")
    lats, lons = target.cell_centers()
    r = (source.lat_max - lats) / source.resolution - 0.5
    c = (lons - source.lon_min) / source.lon_res - 0.5
    rr, cc = np.meshgrid(r, c, indexing="ij")
    out = ndimage.map_coordinates(values, [rr, cc], order=1, mode="nearest")
    return FrameSequence("relief_m", target, [0], out[None].astype(np.float32))
