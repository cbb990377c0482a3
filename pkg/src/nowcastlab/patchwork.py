"""Ring-interpolated patch extraction, tiling, reassembly and full-map resize.

A patch of side ``isize`` keeps the ``tsize`` target block of the source
verbatim in its centre. Each of the ``margin = (isize - tsize) / 2`` rings
around it summarizes a band of the source: ring ``k`` is built from four
source rectangles (upper, lower, left, right) of width ``w`` that are
area-averaged down to one-cell-wide strips. ``w`` grows by ``step`` after
every ``freq`` rings, so the patch border covers a neighbourhood much wider
than the margin, more coarsely the further out it goes.

Source cells outside the map read as zero (no rain).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage, sparse

CENTER, UPPER, LOWER, LEFT, RIGHT = range(5)
RECT_ORDER = (UPPER, LOWER, LEFT, RIGHT)
RECT_NAMES = {CENTER: "center", UPPER: "upper", LOWER: "lower", LEFT: "left", RIGHT: "right"}


@dataclass(frozen=True)
class PatchSpec:
    isize: int = 256
    tsize: int = 128
    step: int = 1
    freq: int = 20

    def __post_init__(self):
        if self.isize < 8 or self.tsize < 8:
            raise ValueError("isize and tsize must both be >= 8")
        if self.tsize > self.isize or (self.isize - self.tsize) % 2:
            raise ValueError("isize - tsize must be a non-negative even number")
        if self.step < 0 or self.freq < 1:
            raise ValueError("step must be >= 0 and freq >= 1")

    @property
    def margin(self) -> int:
        return (self.isize - self.tsize) // 2


def ring_schedule(spec: PatchSpec, as_printed: bool = False) -> list[tuple[int, int]]:
    """(offset, width) of the source band consumed by each ring.

    ``offset`` is the distance from the target edge to the inner side of
    the band. The default advances by the width actually consumed and only
    then widens the band. ``as_printed=True`` reproduces the literal order
    in which the band is widened before advancing, which skips ``step``
    source cells every ``freq`` rings.
    """
    w, off, out = 1, 0, []
    for k in range(1, spec.margin + 1):
        out.append((off, w))
        if as_printed:
            if k % spec.freq == 0:
                w += spec.step
            off += w
        else:
            off += w
            if k % spec.freq == 0:
                w += spec.step
    return out


def source_reach(spec: PatchSpec, as_printed: bool = False) -> int:
    """Cells of source neighbourhood summarized beyond each side of the target."""
    sched = ring_schedule(spec, as_printed)
    if not sched:
        return 0
    off, w = sched[-1]
    return off + w


@lru_cache(maxsize=None)
def area_weights(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) box-resampling matrix: each output averages the input
    interval it covers, with fractional overlap at the edges. Rows sum to 1.
    """
    w = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for o in range(n_out):
        a, b = o * scale, (o + 1) * scale
        for i in range(int(math.floor(a)), min(int(math.ceil(b)), n_in)):
            w[o, i] = min(b, i + 1) - max(a, i)
    w /= w.sum(axis=1, keepdims=True)
    return w


def area_resize(rect: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Area-average ``rect`` to ``shape`` (separable box resampling)."""
    rect = np.asarray(rect, dtype=np.float64)
    return area_weights(rect.shape[0], shape[0]) @ rect @ area_weights(rect.shape[1], shape[1]).T


@dataclass
class RingRect:
    ring: int
    name: str
    width: int
    source: tuple[slice, slice]
    """Rectangle in footprint-array coordinates."""
    strip: np.ndarray


@dataclass
class Patch:
    values: np.ndarray
    spec: PatchSpec
    origin: tuple[int, int]
    footprint: tuple[int, int, int, int]
    """Source rows [r0, r1) and columns [c0, c1) the patch summarizes."""
    owner: np.ndarray = None
    """Which rectangle made the final write to each cell (CENTER, UPPER, ...)."""
    ring: np.ndarray = None
    """Ring index of the final write to each cell; 0 is the copied centre."""
    writes: np.ndarray = None
    """Raw number of writes per cell; corners of each ring are written twice."""
    rects: list[RingRect] = field(default_factory=list)


def _padded_window(source: np.ndarray, r0: int, r1: int, c0: int, c1: int) -> np.ndarray:
    """source[r0:r1, c0:c1] with zeros wherever the window leaves the array."""
    out = np.zeros((r1 - r0, c1 - c0), dtype=np.float64)
    H, W = source.shape
    rr0, rr1 = max(r0, 0), min(r1, H)
    cc0, cc1 = max(c0, 0), min(c1, W)
    if rr0 < rr1 and cc0 < cc1:
        out[rr0 - r0 : rr1 - r0, cc0 - c0 : cc1 - c0] = source[rr0:rr1, cc0:cc1]
    return out


def extract_patch(source: np.ndarray, spec: PatchSpec, origin=(0, 0), keep_rects: bool = False) -> Patch:
    """Run the ring-interpolation patch extraction literally, ring by ring.

    ``origin`` is the source position of the patch's top-left cell, so the
    target block is ``source[x+margin : x+margin+tsize, y+margin : ...]``.
    """
    x, y = origin
    m, t = spec.margin, spec.tsize
    reach = source_reach(spec)
    # Work in a zero-padded footprint so every index below is in range.
    fr0, fc0 = x + m - reach, y + m - reach
    side = t + 2 * reach
    I = _padded_window(np.asarray(source), fr0, fr0 + side, fc0, fc0 + side)

    P = np.zeros((spec.isize, spec.isize))
    owner = np.full(P.shape, -1, dtype=np.int8)
    ring = np.full(P.shape, -1, dtype=np.int16)
    writes = np.zeros(P.shape, dtype=np.int16)

    ur_i, dr_i, lc_i, rc_i = reach, reach + t, reach, reach + t
    ur_p, dr_p, lc_p, rc_p = m, m + t, m, m + t
    P[ur_p:dr_p, lc_p:rc_p] = I[ur_i:dr_i, lc_i:rc_i]
    owner[ur_p:dr_p, lc_p:rc_p] = CENTER
    ring[ur_p:dr_p, lc_p:rc_p] = 0
    writes[ur_p:dr_p, lc_p:rc_p] += 1

    rects = []
    w_i, w_p = 1, 1
    for k in range(1, m + 1):
        boxes = {
            UPPER: ((ur_i - w_i, ur_i, lc_i - w_i, rc_i + w_i), (ur_p - w_p, ur_p, lc_p - w_p, rc_p + w_p)),
            LOWER: ((dr_i, dr_i + w_i, lc_i - w_i, rc_i + w_i), (dr_p, dr_p + w_p, lc_p - w_p, rc_p + w_p)),
            LEFT: ((ur_i - w_i, dr_i + w_i, lc_i - w_i, lc_i), (ur_p - w_p, dr_p + w_p, lc_p - w_p, lc_p)),
            RIGHT: ((ur_i - w_i, dr_i + w_i, rc_i, rc_i + w_i), (ur_p - w_p, dr_p + w_p, rc_p, rc_p + w_p)),
        }
        for code in RECT_ORDER:
            (a0, a1, b0, b1), (p0, p1, q0, q1) = boxes[code]
            strip = area_resize(I[a0:a1, b0:b1], (p1 - p0, q1 - q0))
            P[p0:p1, q0:q1] = strip
            owner[p0:p1, q0:q1] = code
            ring[p0:p1, q0:q1] = k
            writes[p0:p1, q0:q1] += 1
            if keep_rects:
                rects.append(RingRect(k, RECT_NAMES[code], w_i, (slice(a0, a1), slice(b0, b1)), strip))
        consumed = w_i
        if k % spec.freq == 0:
            w_i += spec.step
        ur_i -= consumed
        dr_i += consumed
        lc_i -= consumed
        rc_i += consumed
        ur_p -= w_p
        dr_p += w_p
        lc_p -= w_p
        rc_p += w_p

    return Patch(
        values=P,
        spec=spec,
        origin=(x, y),
        footprint=(fr0, fr0 + side, fc0, fc0 + side),
        owner=owner,
        ring=ring,
        writes=writes,
        rects=rects,
    )


class PatchOperator:
    """The extraction compiled into one sparse linear map.

    Extraction is linear in the source, so for a fixed spec it is a matrix
    from the (tsize + 2*reach)^2 footprint to the isize^2 patch. Applying it
    to many footprints at once is far cheaper than the ring loop.
    """

    def __init__(self, spec: PatchSpec):
        self.spec = spec
        self.reach = source_reach(spec)
        self.side = spec.tsize + 2 * self.reach
        self.matrix = self._build()

    def _build(self) -> sparse.csr_matrix:
        spec, side = self.spec, self.side
        m, t, n = spec.margin, spec.tsize, spec.isize
        rows, cols, vals = [], [], []

        def emit(pr, pc, sr, sc, wr, wc):
            # patch cells pr x pc  <-  source cells sr x sc  with weight wr (x) wc
            for a, p in enumerate(pr):
                for b, q in enumerate(pc):
                    ws = np.outer(wr[a], wc[b])
                    nz = np.nonzero(ws)
                    rows.extend([p * n + q] * len(nz[0]))
                    cols.extend(((sr[nz[0]]) * side + sc[nz[1]]).tolist())
                    vals.extend(ws[nz].tolist())

        r = self.reach
        center = np.arange(t)
        for i in range(t):
            rows.extend(((m + i) * n + m + center).tolist())
            cols.extend(((r + i) * side + r + center).tolist())
            vals.extend([1.0] * t)

        for k, (off, w) in enumerate(ring_schedule(spec), start=1):
            lo_p, hi_p = m - k, m + t + k - 1  # ring k patch row/col of upper/left and lower/right
            src_lo = np.arange(r - off - w, r - off)
            src_hi = np.arange(r + t + off, r + t + off + w)
            full = np.arange(r - off - w, r + t + off + w)  # source span incl. corners
            span = np.arange(lo_p, hi_p + 1)  # patch span incl. corners
            wr_strip = area_weights(w, 1)
            w_span = area_weights(len(full), len(span))
            inner = slice(1, len(span) - 1)
            # upper/lower keep only their non-corner cells (corners are overwritten)
            emit([lo_p], span[inner], src_lo, full, wr_strip, w_span[inner])
            emit([hi_p], span[inner], src_hi, full, wr_strip, w_span[inner])
            emit(span, [lo_p], full, src_lo, w_span, wr_strip)
            emit(span, [hi_p], full, src_hi, w_span, wr_strip)

        return sparse.csr_matrix(
            (vals, (rows, cols)), shape=(n * n, side * side)
        )

    def footprints(self, source: np.ndarray, origins) -> np.ndarray:
        """Stack of zero-padded source footprints, shape (len(origins), side, side)."""
        m, r = self.spec.margin, self.reach
        return np.stack(
            [_padded_window(source, x + m - r, x + m - r + self.side, y + m - r, y + m - r + self.side) for x, y in origins]
        )

    def apply(self, footprints: np.ndarray) -> np.ndarray:
        """(N, side, side) footprints -> (N, isize, isize) patches."""
        fp = np.asarray(footprints, dtype=np.float64).reshape(len(footprints), -1)
        out = self.matrix @ fp.T
        return np.asarray(out.T).reshape(len(footprints), self.spec.isize, self.spec.isize)

    def __call__(self, source: np.ndarray, origins) -> np.ndarray:
        return self.apply(self.footprints(source, origins))


@dataclass(frozen=True)
class Tile:
    row: int
    col: int
    r0: int
    c0: int
    size: int

    @property
    def target(self) -> tuple[slice, slice]:
        return slice(self.r0, self.r0 + self.size), slice(self.c0, self.c0 + self.size)


def tile_grid(shape: tuple[int, int], tsize: int) -> list[Tile]:
    H, W = shape
    nr, nc = math.ceil(H / tsize), math.ceil(W / tsize)
    return [Tile(i, j, i * tsize, j * tsize, tsize) for i in range(nr) for j in range(nc)]


def patch_origin(tile: Tile, spec: PatchSpec) -> tuple[int, int]:
    return tile.r0 - spec.margin, tile.c0 - spec.margin


def tile_map(grid: np.ndarray, spec: PatchSpec) -> list[tuple[Patch, Tile]]:
    """Non-overlapping tsize tiling of the map, one extracted patch per tile.

    Tiles on the bottom/right edge hang over the map; the overhang reads as
    zero and is cropped again by :func:`reassemble`.
    """
    grid = np.asarray(grid)
    return [(extract_patch(grid, spec, patch_origin(t, spec)), t) for t in tile_grid(grid.shape, spec.tsize)]


def naive_patch(source: np.ndarray, spec: PatchSpec, origin=(0, 0)) -> np.ndarray:
    """Plain isize crop around the target: the margin holds raw neighbours only."""
    x, y = origin
    return _padded_window(np.asarray(source), x, x + spec.isize, y, y + spec.isize)


def target_block(patch_values: np.ndarray, spec: PatchSpec) -> np.ndarray:
    m = spec.margin
    return patch_values[..., m : m + spec.tsize, m : m + spec.tsize]


def reassemble(tiles, shape: tuple[int, int]) -> np.ndarray:
    """Paste (Tile, tsize x tsize grid) pairs back into a map of ``shape``.

    Every map cell must be covered exactly once.
    """
    H, W = shape
    tiles = list(tiles)
    if not tiles:
        raise ValueError("no tiles")
    ext_h = max(t.r0 + t.size for t, _ in tiles)
    ext_w = max(t.c0 + t.size for t, _ in tiles)
    canvas = np.zeros((max(ext_h, H), max(ext_w, W)), dtype=np.float64)
    count = np.zeros(canvas.shape, dtype=np.int32)
    for tile, values in tiles:
        values = np.asarray(values)
        if values.shape != (tile.size, tile.size):
            raise ValueError(f"tile ({tile.row}, {tile.col}) has shape {values.shape}")
        canvas[tile.target] = values
        count[tile.target] += 1
    count = count[:H, :W]
    if np.any(count > 1):
        raise ValueError("overlapping tiles")
    if np.any(count == 0):
        raise ValueError("missing tiles: map not fully covered")
    return canvas[:H, :W]


def resize_full_map(grid: np.ndarray, out_shape=(256, 256)) -> np.ndarray:
    """Bilinear resize on cell centres (edges clamp to the border value)."""
    grid = np.asarray(grid, dtype=np.float64)
    H, W = grid.shape[-2:]
    oh, ow = out_shape
    r = (np.arange(oh) + 0.5) * (H / oh) - 0.5
    c = (np.arange(ow) + 0.5) * (W / ow) - 0.5
    rr, cc = np.meshgrid(r, c, indexing="ij")
    if grid.ndim == 2:
        return ndimage.map_coordinates(grid, [rr, cc], order=1, mode="nearest")
    flat = grid.reshape(-1, H, W)
    out = np.stack([ndimage.map_coordinates(g, [rr, cc], order=1, mode="nearest") for g in flat])
    return out.reshape(grid.shape[:-2] + (oh, ow))
