# splat_avatar/core/rasterizer.py
"""
Tile-based alpha blending of projected Gaussians

The image is cut into 16x16 tiles and every visible splat is duplicated into the tiles its
support overlaps. Tiles with similar splat counts are stacked into padded batches, and each
batch blends front to back as one dense [tiles x pixels x splats] tensor. The blend is a
custom autograd Function whose backward is analytic; everything upstream of it (conic,
projection, covariance, rig) is differentiated by autograd.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from ..models.geometry_model import Camera, FrameBatch, GaussianBatch, GaussianWorld, SplatSet
from ..models.image_model import ProjectedBatch, RenderOutput
from .geometry import local_to_global_batch, view_dependent_color
from .projection import MIN_ALPHA, as_gaussian_batch, project_gaussians, tile_range
from .service_manager import get_tile_executor

TILE_SIZE = 16
TILE_PIXELS = TILE_SIZE * TILE_SIZE
ALPHA_MAX = 0.99
TRANSMITTANCE_STOP = 1e-4
# Bounds on one batch: tiles x pixels x padded splats
BATCH_ELEMENTS = 1 << 18
MAX_TILES_PER_BATCH = 64


def pixel_axis(start: torch.Tensor, count: int, dtype: torch.dtype) -> torch.Tensor:
    """Pixel-centre coordinates start + 0.5 ... start + count - 0.5 along one image axis"""
    return start.to(dtype)[..., None] + torch.arange(count, dtype=dtype) + 0.5


@dataclass
class TileBatch:
    """Tiles blended together, their splat lists padded to the longest one"""
    tile_ids: torch.Tensor  # (T,)
    splats: torch.Tensor  # (T, K) indices into the canonically ordered visible arrays
    valid: torch.Tensor  # (T, K), False on padding

    x0: torch.Tensor
    y0: torch.Tensor

    def __len__(self) -> int:
        return self.tile_ids.shape[0]

    def pixel_axes(self, dtype: torch.dtype) -> Tuple[torch.Tensor, torch.Tensor]:
        """(T, 16) row and column coordinates; border tiles reach past the image"""
        return pixel_axis(self.y0, TILE_SIZE, dtype), pixel_axis(self.x0, TILE_SIZE, dtype)


@dataclass
class TileBins:
    width: int
    height: int
    tiles_x: int
    tiles_y: int
    tile_ids: torch.Tensor  # non-empty tiles, ascending
    counts: torch.Tensor  # splats per non-empty tile
    batches: List[TileBatch]

    @property
    def n_tiles(self) -> int:
        return self.tiles_x * self.tiles_y

    def to_tiles(self, image: torch.Tensor) -> torch.Tensor:
        """(H, W, C) image to (tiles, 256, C), zero past the border"""
        padded = image.new_zeros((self.tiles_y * TILE_SIZE, self.tiles_x * TILE_SIZE, image.shape[-1]))
        padded[: self.height, : self.width] = image
        return (
            padded.reshape(self.tiles_y, TILE_SIZE, self.tiles_x, TILE_SIZE, -1)
            .permute(0, 2, 1, 3, 4)
            .reshape(self.n_tiles, TILE_PIXELS, -1)
        )

    def from_tiles(self, tiles: torch.Tensor) -> torch.Tensor:
        """Inverse of to_tiles, cropped to the image"""
        image = (
            tiles.reshape(self.tiles_y, self.tiles_x, TILE_SIZE, TILE_SIZE, -1)
            .permute(0, 2, 1, 3, 4)
            .reshape(self.tiles_y * TILE_SIZE, self.tiles_x * TILE_SIZE, -1)
        )
        return image[: self.height, : self.width].contiguous()


def canonical_order(proj: ProjectedBatch, opacity: torch.Tensor, color: torch.Tensor) -> torch.Tensor:
    """
    Visible splats ordered by depth, ties broken by content

    The order depends only on what each splat looks like, never on its position in the
    input list, so permuting the input cannot change the image.
    """
    visible = proj.visible.nonzero().squeeze(-1)
    if visible.numel() == 0:
        return visible
    columns = [
        proj.depth, proj.mean2d[:, 0], proj.mean2d[:, 1],
        proj.conic[:, 0], proj.conic[:, 1], proj.conic[:, 2],
        opacity, color[:, 0], color[:, 1], color[:, 2],
    ]
    keys = [c.detach()[visible].double().cpu().numpy() for c in columns]
    # np.lexsort treats the last key as primary
    order = np.lexsort(tuple(reversed(keys)))
    return visible[torch.from_numpy(order)]


def _batch_tiles(
    tile_ids: torch.Tensor, counts: torch.Tensor, rank: torch.Tensor, tiles_x: int
) -> List[TileBatch]:
    """
    Group tiles into padded batches

    Tiles are taken in ascending splat count so each batch pads little. The grouping depends
    only on the bins, never on the worker count, so every batch sees the same arithmetic.
    """
    starts = torch.cumsum(counts, 0) - counts
    order = torch.argsort(counts, stable=True)
    sizes = counts[order].tolist()
    batches = []
    begin = 0
    while begin < len(sizes):
        end = begin + 1
        while (
            end < len(sizes)
            and end - begin < MAX_TILES_PER_BATCH
            and (end + 1 - begin) * sizes[end] * TILE_PIXELS <= BATCH_ELEMENTS
        ):
            end += 1
        pick = order[begin:end]
        slots = torch.arange(sizes[end - 1])
        valid = slots[None, :] < counts[pick][:, None]
        positions = torch.where(valid, starts[pick][:, None] + slots[None, :], torch.zeros_like(slots)[None, :])
        ids = tile_ids[pick]
        batches.append(TileBatch(
            tile_ids=ids,
            splats=rank[positions],
            valid=valid,
            x0=(ids % tiles_x) * TILE_SIZE,
            y0=(ids // tiles_x) * TILE_SIZE,
        ))
        begin = end
    return batches


def bin_tiles(mean2d: torch.Tensor, radius: torch.Tensor, width: int, height: int) -> TileBins:
    """Duplicate each splat into every tile its support overlaps, keyed by (tile, rank)"""
    tiles_x = (width + TILE_SIZE - 1) // TILE_SIZE
    tiles_y = (height + TILE_SIZE - 1) // TILE_SIZE
    n = mean2d.shape[0]
    if n == 0:
        empty = torch.zeros(0, dtype=torch.long)
        return TileBins(width, height, tiles_x, tiles_y, empty, empty, [])

    m = mean2d.detach()
    r = radius.detach()
    # Pixel i has its center at i + 0.5
    x0, x1 = tile_range(m[:, 0] - r - 0.5, m[:, 0] + r - 0.5, TILE_SIZE, tiles_x)
    y0, y1 = tile_range(m[:, 1] - r - 0.5, m[:, 1] + r - 0.5, TILE_SIZE, tiles_y)
    nx = x1 - x0
    counts = nx * (y1 - y0)

    rank = torch.arange(n).repeat_interleave(counts)
    starts = torch.cumsum(counts, 0) - counts
    local = torch.arange(rank.numel()) - starts.repeat_interleave(counts)
    tx = x0[rank] + local % nx[rank]
    ty = y0[rank] + local // nx[rank]
    tile = ty * tiles_x + tx

    order = torch.argsort(tile * n + rank)
    tile, rank = tile[order], rank[order]
    tile_ids, per_tile = torch.unique_consecutive(tile, return_counts=True)
    return TileBins(
        width, height, tiles_x, tiles_y, tile_ids, per_tile,
        _batch_tiles(tile_ids, per_tile, rank, tiles_x),
    )


def splat_alpha(
    ys: torch.Tensor, xs: torch.Tensor, mean2d: torch.Tensor, conic: torch.Tensor, opacity: torch.Tensor
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    Gaussian falloff of every splat over a grid of pixel centres

    ys (..., R) and xs (..., C) are the grid's row and column coordinates; mean2d, conic and
    opacity carry a trailing splat axis K. Returns the offsets dx (..., 1, C, K) and
    dy (..., R, 1, K), then the falloff G, the unclamped opacity * G and the blended alpha,
    all (..., R, C, K).
    """
    dx = xs[..., None, :, None] - mean2d[..., None, None, :, 0]
    dy = ys[..., :, None, None] - mean2d[..., None, None, :, 1]
    a, b, c = (conic[..., None, None, :, i] for i in range(3))
    power = -0.5 * a * dx * dx - (b * dx) * dy - 0.5 * c * dy * dy
    gauss = torch.exp(power)
    raw = opacity[..., None, None, :] * gauss
    alpha = torch.clamp(raw, max=ALPHA_MAX)
    alpha = torch.where(alpha < MIN_ALPHA, torch.zeros_like(alpha), alpha)
    return dx, dy, gauss, raw, alpha


def composite_weights(alpha: torch.Tensor):
    """
    Front-to-back compositing weights of a [... x pixels x splats] alpha tensor

    A splat is blended while the transmittance after it stays at or above the stop
    threshold; the running product is non-increasing, so the blended splats are a prefix.
    """
    if alpha.shape[-1] == 0:
        empty = torch.zeros_like(alpha)
        return empty.bool(), empty, empty, alpha.new_ones(alpha.shape[:-1])
    remaining = torch.cumprod(1.0 - alpha, dim=-1)
    included = remaining >= TRANSMITTANCE_STOP
    transmittance = torch.cat([torch.ones_like(alpha[..., :1]), remaining[..., :-1]], dim=-1)
    weights = torch.where(included, alpha * transmittance, torch.zeros_like(alpha))
    final_t = torch.where(included, remaining, torch.ones_like(remaining)).amin(dim=-1)
    return included, transmittance, weights, final_t


def _image_axes(cam: Camera, dtype: torch.dtype) -> Tuple[torch.Tensor, torch.Tensor]:
    zero = torch.zeros((), dtype=torch.long)
    return pixel_axis(zero, cam.height, dtype), pixel_axis(zero, cam.width, dtype)


def contribution_mask(splats: Union[GaussianBatch, List[GaussianWorld]], cam: Camera) -> torch.Tensor:
    """[pixels x splats] mask of the pairs that are blended, unclamped and not skipped"""
    gaussians = as_gaussian_batch(splats)
    proj = project_gaussians(gaussians, cam)
    order = canonical_order(proj, gaussians.opacity, gaussians.color)
    ys, xs = _image_axes(cam, gaussians.mean.dtype)
    with torch.no_grad():
        _, _, _, raw, alpha = splat_alpha(ys, xs, proj.mean2d[order], proj.conic[order], gaussians.opacity[order])
        raw, alpha = raw.flatten(0, 1), alpha.flatten(0, 1)
        included, _, _, _ = composite_weights(alpha)
    mask = torch.zeros((cam.height * cam.width, len(gaussians)), dtype=torch.bool)
    mask[:, order] = included & (alpha > 0) & (raw <= ALPHA_MAX)
    return mask


def _map_batches(executor: Optional[ThreadPoolExecutor], fn: Callable, batches: Sequence[TileBatch]) -> list:
    if executor is None:
        return [fn(batch) for batch in batches]
    return list(executor.map(fn, batches))


def _batch_alpha(batch: TileBatch, mean2d, conic, opacity, dtype):
    ys, xs = batch.pixel_axes(dtype)
    idx = batch.splats
    # Padding gets zero opacity, hence alpha 0 and a transmittance factor of exactly 1
    return splat_alpha(ys, xs, mean2d[idx], conic[idx], opacity[idx] * batch.valid)


def _power_grads(d_power: torch.Tensor, dx: torch.Tensor, dy: torch.Tensor, conic: torch.Tensor):
    """Chain dL/dpower on the (..., R, C, K) grid to the 2D means and conics"""
    a, b, c = conic.unbind(-1)
    dx, dy = dx.squeeze(-3), dy.squeeze(-2)
    col_sum = d_power.sum(-3)
    row_sum = d_power.sum(-2)
    x_moment = (dx * col_sum).sum(-2)
    y_moment = (dy * row_sum).sum(-2)
    xy_moment = (dy * (d_power * dx[..., None, :, :]).sum(-2)).sum(-2)
    d_mean = torch.stack([a * x_moment + b * y_moment, b * x_moment + c * y_moment], dim=-1)
    d_conic = torch.stack([
        -0.5 * (dx * dx * col_sum).sum(-2),
        -xy_moment,
        -0.5 * (dy * dy * row_sum).sum(-2),
    ], dim=-1)
    return d_mean, d_conic


class _AlphaBlending(torch.autograd.Function):
    @staticmethod
    def forward(ctx, mean2d, conic, opacity, colors, bins: TileBins, executor):
        dtype = colors.dtype

        def blend(batch: TileBatch):
            alpha = _batch_alpha(batch, mean2d, conic, opacity, dtype)[-1].flatten(-3, -2)
            _, _, weights, final_t = composite_weights(alpha)
            return torch.bmm(weights, colors[batch.splats]), 1.0 - final_t

        tile_color = colors.new_zeros((bins.n_tiles, TILE_PIXELS, 3))
        tile_alpha = colors.new_zeros((bins.n_tiles, TILE_PIXELS, 1))
        for batch, (c, a) in zip(bins.batches, _map_batches(executor, blend, bins.batches)):
            tile_color[batch.tile_ids] = c
            tile_alpha[batch.tile_ids] = a[..., None]

        ctx.save_for_backward(mean2d, conic, opacity, colors)
        ctx.bins = bins
        ctx.executor = executor
        return bins.from_tiles(tile_color), bins.from_tiles(tile_alpha)[..., 0]

    @staticmethod
    def backward(ctx, grad_color, grad_alpha):
        mean2d, conic, opacity, colors = ctx.saved_tensors
        bins: TileBins = ctx.bins
        dtype = colors.dtype
        if grad_color is None:
            grad_color = torch.zeros((bins.height, bins.width, 3), dtype=dtype)
        if grad_alpha is None:
            grad_alpha = torch.zeros((bins.height, bins.width), dtype=dtype)
        color_tiles = bins.to_tiles(grad_color)
        alpha_tiles = bins.to_tiles(grad_alpha[..., None])[..., 0]

        def batch_grads(batch: TileBatch):
            idx = batch.splats
            g = color_tiles[batch.tile_ids]
            ga = alpha_tiles[batch.tile_ids]
            dx, dy, gauss, raw, alpha = _batch_alpha(batch, mean2d, conic, opacity, dtype)
            flat_raw, alpha = raw.flatten(-3, -2), alpha.flatten(-3, -2)
            included, transmittance, weights, final_t = composite_weights(alpha)

            d_colors = torch.bmm(weights.transpose(1, 2), g)
            g_dot_c = torch.bmm(g, colors[idx].transpose(1, 2))
            weighted = weights * g_dot_c
            behind = weighted.flip(-1).cumsum(-1).flip(-1) - weighted
            one_minus = 1.0 - alpha
            d_alpha = transmittance * g_dot_c - behind / one_minus + (ga * final_t)[..., None] / one_minus
            # Clamped and skipped pairs pass no gradient
            active = included & (flat_raw >= MIN_ALPHA) & (flat_raw <= ALPHA_MAX)
            d_alpha = torch.where(active, d_alpha, torch.zeros_like(d_alpha)).reshape(raw.shape)

            d_opacity = (d_alpha * gauss).sum((-3, -2))
            d_mean, d_conic = _power_grads(d_alpha * raw, dx, dy, conic[idx])
            return d_mean, d_conic, d_opacity, d_colors

        d_mean2d = torch.zeros_like(mean2d)
        d_conic = torch.zeros_like(conic)
        d_opacity = torch.zeros_like(opacity)
        d_colors = torch.zeros_like(colors)
        # Partial sums merged in batch order, independent of the worker count
        for batch, (dm, dc, do, dcol) in zip(bins.batches, _map_batches(ctx.executor, batch_grads, bins.batches)):
            idx = batch.splats[batch.valid]
            d_mean2d.index_add_(0, idx, dm[batch.valid])
            d_conic.index_add_(0, idx, dc[batch.valid])
            d_opacity.index_add_(0, idx, do[batch.valid])
            d_colors.index_add_(0, idx, dcol[batch.valid])
        return d_mean2d, d_conic, d_opacity, d_colors, None, None


def _render_output(proj: ProjectedBatch, color: torch.Tensor, alpha: torch.Tensor) -> RenderOutput:
    mean2d = proj.mean2d
    if mean2d.requires_grad:
        mean2d.retain_grad()
    return RenderOutput(
        color=color,
        alpha=alpha[..., None],
        mean2d=mean2d,
        radius=proj.radius,
        visible=proj.visible,
    )


def rasterize(
    splats: Union[GaussianBatch, List[GaussianWorld]],
    cam: Camera,
    workers: Optional[int] = None,
) -> RenderOutput:
    gaussians = as_gaussian_batch(splats)
    proj = project_gaussians(gaussians, cam)
    order = canonical_order(proj, gaussians.opacity, gaussians.color)

    bins = bin_tiles(proj.mean2d[order], proj.radius[order], cam.width, cam.height)
    color, alpha = _AlphaBlending.apply(
        proj.mean2d[order],
        proj.conic[order],
        gaussians.opacity[order],
        gaussians.color[order],
        bins,
        get_tile_executor(workers),
    )
    return _render_output(proj, color, alpha)


def naive_rasterize(splats: Union[GaussianBatch, List[GaussianWorld]], cam: Camera) -> RenderOutput:
    """Brute-force reference: every pixel against every visible splat, no tiles"""
    gaussians = as_gaussian_batch(splats)
    proj = project_gaussians(gaussians, cam)
    order = canonical_order(proj, gaussians.opacity, gaussians.color)
    ys, xs = _image_axes(cam, gaussians.mean.dtype)

    alpha = splat_alpha(ys, xs, proj.mean2d[order], proj.conic[order], gaussians.opacity[order])[-1]
    _, _, weights, final_t = composite_weights(alpha.flatten(0, 1))
    color = (weights @ gaussians.color[order]).reshape(cam.height, cam.width, 3)
    return _render_output(proj, color, (1.0 - final_t).reshape(cam.height, cam.width))


def render_splats(
    splats: SplatSet,
    frames: FrameBatch,
    cam: Camera,
    workers: Optional[int] = None,
) -> RenderOutput:
    """Rig the splats onto the frames and rasterize them"""
    gaussians = local_to_global_batch(splats, frames)
    if splats.sh_rest.shape[1] > 0:
        gaussians.color = view_dependent_color(
            splats.color, splats.sh_rest, gaussians.mean, cam.center(gaussians.mean.dtype)
        )
    return rasterize(gaussians, cam, workers=workers)
