"""Synthetic radar scenes: advected Gaussian rain cells that grow and decay.

Cells are laid out in ``n_cells`` slots. Each slot hosts a succession of
cells; when one dies the next is born somewhere random in the domain, so the
rain density stays roughly constant over arbitrarily long scenes. A cell's
centre follows the velocity field and its amplitude evolves as
``a0 * g**age`` times a smooth fade-in/fade-out envelope.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid_store import DEFAULT_CADENCE, FrameSequence, GridGeometry

# Rain-rate band edges (mm/h) for the categorical temperature-profile stand-in.
PROFILE_BANDS = (0.1, 1.0, 5.0)
N_PROFILE_TYPES = len(PROFILE_BANDS) + 1


@dataclass
class SceneConfig:
    seed: int = 0
    n_cells: int = 6
    velocity: tuple[float, float] = (1.0, 0.5)
    """(u, v) in cells per step; u moves along columns, v along rows."""
    shear: float = 0.0
    """d(u)/d(row): adds ``shear * (row - rows/2)`` to u, a spatially varying field."""
    velocity_jitter: float = 0.0
    growth_rate: tuple[float, float] = (0.97, 1.03)
    cell_amplitude: tuple[float, float] = (2.0, 20.0)
    cell_radius: tuple[float, float] = (3.0, 8.0)
    lifetime: tuple[int, int] = (20, 50)
    fade: int = 4
    frame_count: int = 282
    rows: int = 64
    cols: int = 64
    start_time: int = 0
    cadence: int = DEFAULT_CADENCE
    spawn_margin: float = 0.25
    """Births may land this fraction of the domain outside it (upwind entry)."""

    def __post_init__(self):
        self.velocity = tuple(self.velocity)
        for name in ("growth_rate", "cell_amplitude", "cell_radius", "lifetime"):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise ValueError(f"{name}: empty range {lo}..{hi}")
        if self.cell_amplitude[0] < 0:
            raise ValueError("cell amplitudes must be >= 0")
        if self.cell_radius[0] <= 0:
            raise ValueError("cell radii must be > 0")
        if self.growth_rate[0] <= 0:
            raise ValueError("growth rates must be > 0")
        if self.lifetime[0] < 1:
            raise ValueError("lifetime must be >= 1 step")
        if self.frame_count < 12:
            raise ValueError("frame_count must be >= 12 (one input+output window)")
        if self.n_cells < 0 or self.rows < 1 or self.cols < 1:
            raise ValueError("counts must be non-negative")


@dataclass
class _Cell:
    birth: int
    death: int
    row: float
    col: float
    amp: float
    growth: float
    radius: float
    du: float
    dv: float
    track: list = field(default_factory=list)


def _envelope(age, life, fade):
    if fade <= 0:
        return 1.0
    up = min(1.0, (age + 1) / fade)
    down = min(1.0, (life - age) / fade)
    return float(np.sin(0.5 * np.pi * max(0.0, min(up, down))) ** 2)


def _velocity_at(cfg: SceneConfig, row: float) -> tuple[float, float]:
    u, v = cfg.velocity
    return u + cfg.shear * (row - cfg.rows / 2), v


def _spawn(rng, cfg: SceneConfig, birth: int) -> _Cell:
    life = int(rng.integers(cfg.lifetime[0], cfg.lifetime[1] + 1))
    m = cfg.spawn_margin
    row = rng.uniform(-m * cfg.rows, (1 + m) * cfg.rows)
    col = rng.uniform(-m * cfg.cols, (1 + m) * cfg.cols)
    jit = cfg.velocity_jitter
    return _Cell(
        birth=birth,
        death=birth + life,
        row=row,
        col=col,
        amp=rng.uniform(*cfg.cell_amplitude),
        growth=rng.uniform(*cfg.growth_rate),
        radius=rng.uniform(*cfg.cell_radius),
        du=rng.uniform(-jit, jit) if jit else 0.0,
        dv=rng.uniform(-jit, jit) if jit else 0.0,
    )


def _cells(cfg: SceneConfig) -> list[_Cell]:
    rng = np.random.default_rng(cfg.seed)
    cells = []
    for _ in range(cfg.n_cells):
        first = _spawn(rng, cfg, 0)
        # Random phase so slots do not all die on the same step.
        phase = int(rng.integers(0, first.death - first.birth))
        first.birth -= phase
        first.death -= phase
        cell = first
        while cell.birth < cfg.frame_count:
            cells.append(cell)
            cell = _spawn(rng, cfg, cell.death)
    for cell in cells:
        r, c = cell.row, cell.col
        for _ in range(cell.birth, cell.death):
            cell.track.append((r, c))
            u, v = _velocity_at(cfg, r)
            r, c = r + v + cell.dv, c + u + cell.du
    return cells


def precipitation_frames(cfg: SceneConfig) -> np.ndarray:
    """Rain-rate field (T, rows, cols) in mm/h, float32."""
    rows = np.arange(cfg.rows, dtype=np.float64)[:, None]
    cols = np.arange(cfg.cols, dtype=np.float64)[None, :]
    out = np.zeros((cfg.frame_count, cfg.rows, cfg.cols), dtype=np.float64)
    for cell in _cells(cfg):
        life = cell.death - cell.birth
        for t in range(max(cell.birth, 0), min(cell.death, cfg.frame_count)):
            age = t - cell.birth
            amp = cell.amp * cell.growth**age * _envelope(age, life, cfg.fade)
            if amp <= 0:
                continue
            r, c = cell.track[age]
            reach = 4 * cell.radius
            if r < -reach or r > cfg.rows + reach or c < -reach or c > cfg.cols + reach:
                continue
            d2 = (rows - r) ** 2 + (cols - c) ** 2
            out[t] += amp * np.exp(-0.5 * d2 / cell.radius**2)
    np.maximum(out, 0.0, out=out)
    return out.astype(np.float32)


def profile_types(precip: np.ndarray) -> np.ndarray:
    """Categorical bands of the rain rate: 0 dry, 1 light, 2 moderate, 3 heavy."""
    return np.digitize(precip, PROFILE_BANDS).astype(np.float32)


def ridge_relief(rows: int, cols: int, height: float = 1500.0) -> np.ndarray:
    """Smooth diagonal mountain ridge in metres."""
    r = np.arange(rows)[:, None] / max(rows - 1, 1)
    c = np.arange(cols)[None, :] / max(cols - 1, 1)
    dist = (r - c) / np.sqrt(2)
    return (height * np.exp(-0.5 * (dist / 0.15) ** 2) + 50.0 * r).astype(np.float32)


def generate_scene(cfg: SceneConfig, geometry: GridGeometry | None = None) -> dict[str, FrameSequence]:
    """All three channels of a synthetic scene, keyed by channel name."""
    geometry = geometry or GridGeometry.unit(cfg.rows, cfg.cols)
    if geometry.shape != (cfg.rows, cfg.cols):
        raise ValueError("geometry does not match scene size")
    precip = precipitation_frames(cfg)
    ts = cfg.start_time + cfg.cadence * np.arange(cfg.frame_count, dtype=np.int64)
    return {
        "precip_mm_per_h": FrameSequence("precip_mm_per_h", geometry, ts, precip, cfg.cadence),
        "temp_profile_type": FrameSequence(
            "temp_profile_type", geometry, ts, profile_types(precip), cfg.cadence
        ),
        "relief_m": FrameSequence(
            "relief_m", geometry, [0], ridge_relief(cfg.rows, cfg.cols)[None], cfg.cadence
        ),
    }
