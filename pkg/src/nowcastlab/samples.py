"""Model-ready samples: windows of a dataset seen through a spatial view.

Views
-----
full    the map itself is the model input (map side == model side)
resize  the map is bilinearly resized to the model side
patch   one ring-interpolated patch per target tile
naive   one plain crop per target tile (margin holds raw neighbours only)

Patch views are extracted on physical values (mm/h, one-hot fractions,
metres) and transformed afterwards, so the zero padding beyond the map edge
means "no rain".
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch

from . import transform as tf
from .grid_store import FrameSequence
from .partition import SplitPlan, WindowSample, enumerate_windows
from .patchwork import PatchOperator, PatchSpec, Tile, patch_origin, reassemble, resize_full_map, tile_grid
from .synthgen import N_PROFILE_TYPES

VIEW_MODES = ("full", "resize", "patch", "naive")
PRECIP, PROFILE, RELIEF = "precip_mm_per_h", "temp_profile_type", "relief_m"


@dataclass(frozen=True)
class ViewSpec:
    mode: str = "full"
    spatial: int = 64
    tsize: int = 32
    step: int = 1
    freq: int = 4

    def __post_init__(self):
        if self.mode not in VIEW_MODES:
            raise ValueError(f"unknown view mode {self.mode!r}; choose from {VIEW_MODES}")

    @property
    def patch_spec(self) -> PatchSpec:
        return PatchSpec(self.spatial, self.tsize, self.step, self.freq)

    @property
    def tiled(self) -> bool:
        return self.mode in ("patch", "naive")

    def to_dict(self):
        return asdict(self)


@dataclass
class RawData:
    """Physical arrays for one scene: precip (T,H,W) mm/h, profile codes
    (T,H,W), relief (H,W) metres, and frame timestamps."""

    precip: np.ndarray
    profile: np.ndarray
    relief: np.ndarray
    timestamps: np.ndarray
    n_types: int = N_PROFILE_TYPES

    @classmethod
    def from_sequences(cls, seqs: dict[str, FrameSequence], n_types: int = N_PROFILE_TYPES) -> "RawData":
        p = seqs[PRECIP]
        prof = seqs[PROFILE].values if PROFILE in seqs else np.zeros_like(p.values)
        if PROFILE in seqs and not np.array_equal(seqs[PROFILE].timestamps, p.timestamps):
            raise ValueError("profile-type frames are not aligned with precipitation frames")
        relief = seqs[RELIEF].values[0] if RELIEF in seqs else np.zeros(p.values.shape[1:], np.float32)
        return cls(p.values, prof, relief, p.timestamps, n_types)

    @property
    def shape(self) -> tuple[int, int]:
        return self.precip.shape[1:]

    def __len__(self):
        return len(self.precip)


def fit_stats(raw: RawData, plan: SplitPlan) -> tf.NormStats:
    """Log-precipitation and relief statistics over training frames only."""
    idx = plan.frame_indices("train")
    return tf.fit_norm_stats({PRECIP: tf.log1p_forward(raw.precip[idx]), RELIEF: raw.relief})


class SampleSet:
    """Windows of one split, optionally crossed with map tiles."""

    def __init__(self, raw: RawData, plan: SplitPlan, split: str, view: ViewSpec, stats: tf.NormStats,
                 s_in: int = 6, s_out: int = 6, stride: int = 1):
        self.raw, self.plan, self.split, self.view, self.stats = raw, plan, split, view, stats
        if plan.total_frames != len(raw):
            raise ValueError(f"plan covers {plan.total_frames} frames but data has {len(raw)}")
        self.windows: list[WindowSample] = enumerate_windows(plan, split, s_in, s_out, stride)
        self.frames = np.unique(np.concatenate([list(w.frames) for w in self.windows])) if self.windows else np.zeros(0, int)
        self.tiles: list[Tile | None] = tile_grid(raw.shape, view.tsize) if view.tiled else [None]
        if view.mode == "full" and raw.shape != (view.spatial, view.spatial):
            raise ValueError(f"full view needs a {view.spatial}x{view.spatial} map, got {raw.shape}")
        self._prepare()

    # -- preparation ------------------------------------------------------
    def _prepare(self):
        v, raw, st = self.view, self.raw, self.stats
        if v.tiled:
            ps = v.patch_spec
            self._op = PatchOperator(ps) if v.mode == "patch" else None
            self._reach = self._op.reach if self._op else ps.margin
            r = self._reach
            pad = ((r + ps.tsize,) * 2, (r + ps.tsize,) * 2)
            self._pad = r + ps.tsize
            # Physical channel stack per frame: precip, one-hot profile.
            self._phys = {}
            self._relief_pad = np.pad(raw.relief.astype(np.float64), pad)
            self._static = {}
            for t in self.tiles:
                relief = self._extract(self._relief_pad, t)
                self._static[t] = tf.zscore(relief, st, RELIEF)[None].astype(np.float32)
            return
        if v.mode == "full":
            P = raw.precip
            prof = tf.one_hot(raw.profile, raw.n_types)
            relief = raw.relief
        else:
            shape = (v.spatial, v.spatial)
            P = resize_full_map(raw.precip, shape)
            prof = resize_full_map(tf.one_hot(raw.profile, raw.n_types), shape)
            relief = resize_full_map(raw.relief, shape)
        P = np.maximum(P, 0)
        z = tf.precip_forward(P, st).astype(np.float32)
        self._dyn = np.concatenate([z[:, None], prof.astype(np.float32)], axis=1)
        self._targets = z
        self._static_full = tf.zscore(relief, st, RELIEF)[None].astype(np.float32)

    def _frame_phys(self, f: int) -> np.ndarray:
        if f not in self._phys:
            ch = np.concatenate([self.raw.precip[f][None], tf.one_hot(self.raw.profile[f], self.raw.n_types)])
            self._phys[f] = np.pad(ch.astype(np.float64), ((0, 0), (self._pad,) * 2, (self._pad,) * 2))
            if len(self._phys) > 256:
                self._phys.pop(next(iter(self._phys)))
        return self._phys[f]

    def _extract(self, padded: np.ndarray, tile: Tile) -> np.ndarray:
        """View of one (padded) physical map for ``tile``; accepts (..., H, W)."""
        ps = self.view.patch_spec
        x, y = patch_origin(tile, ps)
        if self._op is None:
            r0, c0 = x + self._pad, y + self._pad
            return padded[..., r0 : r0 + ps.isize, c0 : c0 + ps.isize]
        m, r, side = ps.margin, self._reach, self._op.side
        r0, c0 = x + m - r + self._pad, y + m - r + self._pad
        fp = padded[..., r0 : r0 + side, c0 : c0 + side]
        lead = fp.shape[:-2]
        out = self._op.apply(fp.reshape(-1, side, side))
        return out.reshape(lead + (ps.isize, ps.isize))

    # -- access -----------------------------------------------------------
    def __len__(self):
        return len(self.windows) * len(self.tiles)

    def index(self, i: int) -> tuple[WindowSample, Tile | None]:
        return self.windows[i // len(self.tiles)], self.tiles[i % len(self.tiles)]

    def sample(self, i: int):
        w, tile = self.index(i)
        if tile is None:
            x = self._dyn[list(w.input_frames)]
            y = self._targets[list(w.target_frames)]
            return x, self._static_full, y
        st = self.stats
        phys = np.stack([self._extract(self._frame_phys(f), tile) for f in w.input_frames])
        x = np.concatenate([tf.precip_forward(np.maximum(phys[:, :1], 0), st), phys[:, 1:]], axis=1)
        ps = self.view.patch_spec
        sl = tile.target
        y = np.zeros((w.s_out, ps.tsize, ps.tsize))
        for k, f in enumerate(w.target_frames):
            block = self.raw.precip[f][sl]
            y[k, : block.shape[0], : block.shape[1]] = block
        return x.astype(np.float32), self._static[tile], tf.precip_forward(y, st).astype(np.float32)

    def batch(self, indices):
        xs, ss, ys = zip(*(self.sample(int(i)) for i in indices))
        return torch.from_numpy(np.stack(xs)), torch.from_numpy(np.stack(ss)), torch.from_numpy(np.stack(ys))

    def crop(self, pred: torch.Tensor) -> torch.Tensor:
        """Restrict model output to the region scored against the target."""
        if not self.view.tiled:
            return pred
        ps = self.view.patch_spec
        m = ps.margin
        return pred[..., m : m + ps.tsize, m : m + ps.tsize]

    # -- full-map forecasts ------------------------------------------------
    def to_map_mm(self, window_index: int, outputs) -> np.ndarray:
        """Model outputs (standardized) for every tile of one window -> mm/h maps
        of shape (s_out, H, W). ``outputs`` holds one cropped array per tile."""
        H, W = self.raw.shape
        if self.view.tiled:
            mm = [tf.precip_inverse(o, self.stats) for o in outputs]
            s_out = mm[0].shape[0]
            return np.stack([reassemble([(t, m[k]) for t, m in zip(self.tiles, mm)], (H, W)) for k in range(s_out)])
        mm = tf.precip_inverse(outputs[0], self.stats)
        if self.view.mode == "resize":
            mm = np.maximum(resize_full_map(mm, (H, W)), 0)
        return mm

    def truth_mm(self, window_index: int) -> np.ndarray:
        w = self.windows[window_index]
        return self.raw.precip[list(w.target_frames)].astype(np.float64)

    def last_input_mm(self, window_index: int) -> np.ndarray:
        w = self.windows[window_index]
        return self.raw.precip[list(w.input_frames)].astype(np.float64)


def window_batches(ss: SampleSet):
    """Yield (window_index, sample indices of all its tiles)."""
    per = len(ss.tiles)
    for wi in range(len(ss.windows)):
        yield wi, list(range(wi * per, (wi + 1) * per))
