"""Block-sequence train/val/test partitioning and sliding-window slicing.

The frame axis is cut into block-sequences of ``blocks_per_sequence`` blocks
of ``k`` consecutive frames. Inside every block-sequence the blocks are
randomly dealt to the splits (4 train, 1 val, 1 test by default). Model
samples are windows of ``s_in + s_out`` consecutive frames that never leave
their block.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class WindowSample:
    start: int
    s_in: int
    s_out: int
    block_id: int

    @property
    def input_frames(self) -> range:
        return range(self.start, self.start + self.s_in)

    @property
    def target_frames(self) -> range:
        return range(self.start + self.s_in, self.start + self.s_in + self.s_out)

    @property
    def frames(self) -> range:
        return range(self.start, self.start + self.s_in + self.s_out)


@dataclass(frozen=True)
class SplitPlan:
    total_frames: int
    k: int
    seed: int
    assignment: tuple[tuple[str, ...], ...]
    """One tuple per block-sequence giving the split label of each block."""
    blocks_per_sequence: int = 6

    @property
    def n_sequences(self) -> int:
        return len(self.assignment)

    @property
    def used_frames(self) -> int:
        return self.n_sequences * self.blocks_per_sequence * self.k

    @property
    def discarded(self) -> int:
        return self.total_frames - self.used_frames

    def blocks(self, split: str) -> list[int]:
        """Global block ids (block ``b`` covers frames ``[b*k, (b+1)*k)``)."""
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        n = self.blocks_per_sequence
        return [
            seq * n + b
            for seq, labels in enumerate(self.assignment)
            for b, label in enumerate(labels)
            if label == split
        ]

    def frame_indices(self, split: str) -> np.ndarray:
        blocks = self.blocks(split)
        if not blocks:
            return np.zeros(0, dtype=int)
        return np.concatenate([np.arange(b * self.k, (b + 1) * self.k) for b in blocks])

    def to_dict(self) -> dict:
        return {
            "total_frames": self.total_frames,
            "k": self.k,
            "seed": self.seed,
            "blocks_per_sequence": self.blocks_per_sequence,
            "assignment": [list(a) for a in self.assignment],
        }

    @classmethod
    def from_dict(cls, d) -> "SplitPlan":
        return cls(
            total_frames=int(d["total_frames"]),
            k=int(d["k"]),
            seed=int(d["seed"]),
            blocks_per_sequence=int(d.get("blocks_per_sequence", 6)),
            assignment=tuple(tuple(a) for a in d["assignment"]),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "SplitPlan":
        return cls.from_dict(json.loads(Path(path).read_text()))


def build_split(total_frames: int, k: int = 47, seed: int = 0, counts=(4, 1, 1)) -> SplitPlan:
    """Deal blocks of every complete block-sequence to train/val/test.

    Trailing frames that do not fill a whole block-sequence are dropped.
    """
    n_blocks = sum(counts)
    if k < 1:
        raise ValueError("k must be >= 1")
    if total_frames < n_blocks * k:
        raise ValueError(
            f"total_frames={total_frames} is shorter than one block-sequence ({n_blocks}*{k})"
        )
    n_seq = total_frames // (n_blocks * k)
    labels = np.array([s for s, c in zip(SPLITS, counts) for _ in range(c)])
    rng = np.random.default_rng(seed)
    assignment = tuple(tuple(str(x) for x in rng.permutation(labels)) for _ in range(n_seq))
    return SplitPlan(total_frames, k, seed, assignment, n_blocks)


def enumerate_windows(plan: SplitPlan, split: str, s_in: int = 6, s_out: int = 6, stride: int = 1) -> list[WindowSample]:
    """All stride-spaced windows that fit entirely inside a block of ``split``."""
    s = s_in + s_out
    if stride < 1:
        raise ValueError("stride must be >= 1")
    out = []
    for b in plan.blocks(split):
        first = b * plan.k
        for off in range(0, plan.k - s + 1, stride):
            out.append(WindowSample(first + off, s_in, s_out, b))
    return out
