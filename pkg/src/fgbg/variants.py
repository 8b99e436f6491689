"""Offline variant selection: mask similarity/merging and the ensemble
quality score used to pick the best foreground/background split per source
image.

The score rewards ensembles that recognize the class on the foreground
crop, penalizes recognition on the background (information leaked past the
cutout), and penalizes foregrounds whose size strays from the target
fraction of the full image:

    score = ln(mean fg prob) + ln(1 - mean bg prob)
          + lam * ln(1 - |fg_size/bg_size - eps|)

An absolute size deviation of 1 or more makes the last logarithm's argument
nonpositive; such variants are infeasible and score -inf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, VariantError

PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class ScoreParams:
    lam: float = 2.0
    eps: float = 0.1

    def __post_init__(self):
        if self.lam < 0:
            raise DomainError(f"lam must be >= 0, got {self.lam}")
        if not 0.0 < self.eps < 1.0:
            raise DomainError(f"eps must be in (0, 1), got {self.eps}")


@dataclass(frozen=True)
class VariantCandidate:
    """One candidate split: per-model true-class probabilities on the
    foreground crop and on the infilled background, plus pixel sizes."""

    fg_probs: tuple[float, ...]
    bg_probs: tuple[float, ...]
    fg_size: int
    bg_size: int  # full-image pixel count
    mask: np.ndarray | None = None

    def __post_init__(self):
        if len(self.fg_probs) == 0 or len(self.fg_probs) != len(self.bg_probs):
            raise DomainError("fg_probs and bg_probs must be equal-length and nonempty")
        if self.bg_size <= 0 or self.fg_size <= 0:
            raise DomainError("sizes must be positive pixel counts")


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two boolean masks; two empty masks are 1."""
    if a.shape != b.shape:
        raise DomainError(f"mask shapes differ: {a.shape} vs {b.shape}")
    a = a.astype(bool)
    b = b.astype(bool)
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(a, b).sum()) / union


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            # keep the smaller index as representative: stable output order
            if rj < ri:
                ri, rj = rj, ri
            self.parent[rj] = ri


def merge_masks(masks: list[np.ndarray], threshold: float = 0.9) -> list[np.ndarray]:
    """Group masks transitively by pairwise IoU >= threshold and replace each
    group with its pixelwise union. Output keeps first-seen group order."""
    if not masks:
        return []
    shape = masks[0].shape
    for m in masks:
        if m.shape != shape:
            raise DomainError("all masks must share dimensions")
    uf = _UnionFind(len(masks))
    for i in range(len(masks)):
        for j in range(i + 1, len(masks)):
            if mask_iou(masks[i], masks[j]) >= threshold:
                uf.union(i, j)
    groups: dict[int, np.ndarray] = {}
    order: list[int] = []
    for i, m in enumerate(masks):
        root = uf.find(i)
        if root not in groups:
            groups[root] = m.astype(bool)
            order.append(root)
        else:
            groups[root] = np.logical_or(groups[root], m)
    return [groups[r] for r in order]


def variant_score(v: VariantCandidate, params: ScoreParams = ScoreParams()) -> float:
    """Evaluate the three-term quality score; -inf marks an infeasible size."""
    fg_mean = min(max(float(np.mean(v.fg_probs)), PROB_CLAMP), 1.0 - PROB_CLAMP)
    bg_mean = min(max(float(np.mean(v.bg_probs)), PROB_CLAMP), 1.0 - PROB_CLAMP)
    ratio = v.fg_size / v.bg_size
    size_arg = 1.0 - abs(ratio - params.eps)
    if size_arg <= 0.0:
        return -math.inf
    return math.log(fg_mean) + math.log(1.0 - bg_mean) + params.lam * math.log(size_arg)


def select_best_variant(
    variants: list[VariantCandidate], params: ScoreParams = ScoreParams()
) -> int:
    """Index of the highest-scoring variant; ties go to the lowest index."""
    if not variants:
        raise VariantError("no variants to select from")
    scores = [variant_score(v, params) for v in variants]
    best = max(range(len(scores)), key=lambda i: (scores[i], -i))
    if math.isinf(scores[best]) and scores[best] < 0:
        raise VariantError("all variants are infeasible (size score -inf)")
    return best
