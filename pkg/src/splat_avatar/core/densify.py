# splat_avatar/core/densify.py
"""
Adaptive densification and pruning in triangle-local space
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import torch
import torch.nn.functional as F

from ..exceptions import IndexMismatch
from ..models.geometry_model import SplatSet
from ..models.image_model import DensifyStats
from ..models.training_model import LineageEvent, OptimConfig
from ..utils.logging_utils import logger
from .geometry import quaternion_to_matrix
from .optimizer import GaussianOptimizer

SPLIT_CHILDREN = 2


@dataclass
class DensifyResult:
    """New splat set plus the masks that replay the same edit on optimizer state"""
    splats: SplatSet
    stats: DensifyStats
    survivors: torch.Tensor   # rows of the input kept through densification (split parents drop out)
    children: SplatSet        # appended after the survivors
    keep: torch.Tensor        # opacity prune mask over survivors + children
    lineage: List[LineageEvent] = field(default_factory=list)
    cloned: int = 0
    split: int = 0
    pruned: int = 0
    capped: bool = False


def should_densify(iteration: int, config: OptimConfig) -> bool:
    return iteration > 0 and iteration % config.densify_interval == 0 and iteration < config.densify_until


def should_prune_only(iteration: int, config: OptimConfig) -> bool:
    return iteration > 0 and iteration == config.densify_until


def split_generator(seed: int, iteration: int) -> torch.Generator:
    """Generator for split samples, derived from (seed, iteration) only"""
    state = np.random.SeedSequence([seed, iteration, 0xD5]).generate_state(2, dtype=np.uint32)
    return torch.Generator().manual_seed(int(state[0]) << 32 | int(state[1]))


def _clone_children(splats: SplatSet, mask: torch.Tensor, stats: DensifyStats, lr_position: float) -> SplatSet:
    children = splats.select(mask)
    direction = F.normalize(stats.pos_grad_sum[mask].to(children.mu.dtype), dim=-1)
    children.mu = children.mu - lr_position * direction
    return children


def _split_children(splats: SplatSet, mask: torch.Tensor, split_factor: float, generator: torch.Generator) -> SplatSet:
    parents = splats.select(mask).map(lambda t: t.repeat_interleave(SPLIT_CHILDREN, dim=0))
    std = parents.scale
    samples = torch.randn(std.shape, generator=generator, dtype=std.dtype) * std
    parents.mu = parents.mu + (quaternion_to_matrix(parents.rot) @ samples[..., None]).squeeze(-1)
    parents.log_scale = parents.log_scale - math.log(split_factor)
    return parents


def densify_and_prune(
    splats: SplatSet,
    stats: DensifyStats,
    config: OptimConfig,
    iteration: int,
    densify: bool = True,
    generator: Optional[torch.Generator] = None,
) -> DensifyResult:
    """
    Clone small over-threshold splats, split large ones, then drop near-transparent ones

    Children carry their parent's binding. When the edit would exceed the splat cap the
    densification is skipped (pruning still runs).
    """
    n = len(splats)
    if len(stats) != n:
        raise IndexMismatch(f"accumulator covers {len(stats)} splats, set has {n}")
    splats = splats.detach()

    selected = (stats.mean() > config.densify_grad_threshold) if densify else torch.zeros(n, dtype=torch.bool)
    small = splats.scale.amax(dim=-1) <= config.clone_scale_threshold
    clone_mask = selected & small
    split_mask = selected & ~small

    n_clone, n_split = int(clone_mask.sum()), int(split_mask.sum())
    capped = n + n_clone + (SPLIT_CHILDREN - 1) * n_split > config.max_splats
    if capped and (n_clone or n_split):
        logger.warning(
            f"⚠️ Densify @ {iteration} skipped: {n} + {n_clone} clones + {n_split} splits exceeds cap {config.max_splats}",
            train_log=True,
        )
        clone_mask = torch.zeros_like(clone_mask)
        split_mask = torch.zeros_like(split_mask)
        n_clone = n_split = 0

    generator = generator or split_generator(config.seed, iteration)
    clones = _clone_children(splats, clone_mask, stats, config.lr_position)
    splits = _split_children(splats, split_mask, config.split_factor, generator)
    children = clones.concat(splits)

    survivors = ~split_mask
    grown = splats.select(survivors).concat(children)
    keep = grown.opacity >= config.prune_opacity
    result_splats = grown.select(keep)

    # Final index of every row of `grown`, -1 if pruned
    final_index = torch.cumsum(keep.long(), 0) - 1
    final_index[~keep] = -1
    n_survivors = int(survivors.sum())
    lineage = []
    clone_parents = clone_mask.nonzero().squeeze(-1).tolist()
    for j, parent in enumerate(clone_parents):
        child = int(final_index[n_survivors + j])
        lineage.append(LineageEvent(
            iteration=iteration, kind="clone", parent=parent,
            children=[child] if child >= 0 else [], binding=int(splats.binding[parent]),
        ))
    split_parents = split_mask.nonzero().squeeze(-1).tolist()
    offset = n_survivors + n_clone
    for j, parent in enumerate(split_parents):
        rows = final_index[offset + SPLIT_CHILDREN * j: offset + SPLIT_CHILDREN * (j + 1)]
        lineage.append(LineageEvent(
            iteration=iteration, kind="split", parent=parent,
            children=[int(r) for r in rows if r >= 0], binding=int(splats.binding[parent]),
        ))

    return DensifyResult(
        splats=result_splats,
        stats=DensifyStats.zeros(len(result_splats), dtype=stats.grad_sum.dtype),
        survivors=survivors,
        children=children,
        keep=keep,
        lineage=lineage,
        cloned=n_clone,
        split=n_split,
        pruned=int((~keep).sum()),
        capped=capped,
    )


def apply_to_optimizer(result: DensifyResult, optimizer: GaussianOptimizer):
    """Replay a densification result on the optimizer so Adam moments follow each splat"""
    optimizer.prune(result.survivors)
    optimizer.extend(result.children)
    optimizer.prune(result.keep)
