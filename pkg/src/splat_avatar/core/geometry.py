# splat_avatar/core/geometry.py
"""
Rig math - triangle frames and the local-to-global splat transform
"""

from typing import List, Sequence, Tuple

import torch
import torch.nn.functional as F

from ..exceptions import DegenerateTriangle, IndexMismatch
from ..models.geometry_model import (
    FrameBatch,
    GaussianBatch,
    GaussianWorld,
    RiggedSplat,
    RigMesh,
    SplatSet,
    TriangleFrame,
)

# Triangles with area at or below this (squared world units) have no frame
DEGENERATE_AREA = 1e-12

SH_C1 = 0.4886025119029199
SH_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792, 0.5462742152960396)
SH_C3 = (
    -0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
    -0.4570457994644658, 1.445305721320277, -0.5900435899266435,
)


def quaternion_to_matrix(q: torch.Tensor) -> torch.Tensor:
    """(..., 4) quaternions (w, x, y, z), normalized first, to (..., 3, 3) rotations"""
    q = F.normalize(q, dim=-1)
    w, x, y, z = q.unbind(-1)
    return torch.stack([
        1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
    ], dim=-1).reshape(q.shape[:-1] + (3, 3))


def matrix_to_quaternion(m: torch.Tensor) -> torch.Tensor:
    """(..., 3, 3) rotations to (..., 4) unit quaternions with w >= 0"""
    m00, m01, m02 = m[..., 0, 0], m[..., 0, 1], m[..., 0, 2]
    m10, m11, m12 = m[..., 1, 0], m[..., 1, 1], m[..., 1, 2]
    m20, m21, m22 = m[..., 2, 0], m[..., 2, 1], m[..., 2, 2]
    # Four candidate solutions; the one with the largest denominator is the stable one
    candidates = torch.stack([
        torch.stack([1 + m00 + m11 + m22, m21 - m12, m02 - m20, m10 - m01], dim=-1),
        torch.stack([m21 - m12, 1 + m00 - m11 - m22, m01 + m10, m02 + m20], dim=-1),
        torch.stack([m02 - m20, m01 + m10, 1 - m00 + m11 - m22, m12 + m21], dim=-1),
        torch.stack([m10 - m01, m02 + m20, m12 + m21, 1 - m00 - m11 + m22], dim=-1),
    ], dim=-2)
    diag = torch.stack([1 + m00 + m11 + m22, 1 + m00 - m11 - m22, 1 - m00 + m11 - m22, 1 - m00 - m11 + m22], dim=-1)
    best = diag.argmax(dim=-1)
    q = torch.gather(candidates, -2, best[..., None, None].expand(best.shape + (1, 4))).squeeze(-2)
    q = F.normalize(q, dim=-1)
    return torch.where(q[..., :1] < 0, -q, q)


def quaternion_multiply(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    aw, ax, ay, az = a.unbind(-1)
    bw, bx, by, bz = b.unbind(-1)
    return torch.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], dim=-1)


def triangle_frames(corners: torch.Tensor) -> FrameBatch:
    """
    Frames of a batch of triangles given as (F, 3, 3) corner positions

    Raises DegenerateTriangle naming the first face whose area is at or below the threshold.
    """
    v0, v1, v2 = corners[:, 0], corners[:, 1], corners[:, 2]
    edge = v1 - v0
    cross = torch.linalg.cross(edge, v2 - v0)
    cross_norm = cross.norm(dim=-1)
    degenerate = (0.5 * cross_norm <= DEGENERATE_AREA).nonzero()
    if degenerate.numel():
        raise DegenerateTriangle("triangle area below threshold", face_index=int(degenerate[0, 0]))

    edge_len = edge.norm(dim=-1)
    e = edge / edge_len[:, None]
    n = cross / cross_norm[:, None]
    b = torch.linalg.cross(e, n)
    height = cross_norm / edge_len
    return FrameBatch(
        origin=(v0 + v1 + v2) / 3.0,
        rotation=torch.stack([e, n, b], dim=-1),
        scale=0.5 * (edge_len + height),
    )


def compute_triangle_frame(
    v0: Sequence[float], v1: Sequence[float], v2: Sequence[float]
) -> TriangleFrame:
    corners = torch.tensor([[v0, v1, v2]], dtype=torch.float64)
    return triangle_frames(corners).frame(0)


def build_frame_batch(mesh: RigMesh, timestep: int) -> FrameBatch:
    if not 0 <= timestep < mesh.num_frames:
        raise IndexError(f"timestep {timestep} outside [0, {mesh.num_frames})")
    return triangle_frames(mesh.frames[timestep][mesh.faces])


def build_frames(mesh: RigMesh, timestep: int) -> List[TriangleFrame]:
    return build_frame_batch(mesh, timestep).frames()


def _check_binding(binding: torch.Tensor, frames: FrameBatch):
    n_faces = frames.origin.shape[0]
    if binding.numel() and (int(binding.min()) < 0 or int(binding.max()) >= n_faces):
        raise IndexMismatch(
            f"bindings span [{int(binding.min())}, {int(binding.max())}], mesh has {n_faces} faces"
        )


def local_to_global_batch(splats: SplatSet, frames: FrameBatch) -> GaussianBatch:
    """Differentiable in the splat tensors; frames are constants"""
    _check_binding(splats.binding, frames)
    R = frames.rotation[splats.binding]
    T = frames.origin[splats.binding]
    k = frames.scale[splats.binding][:, None]

    rot_world = R @ quaternion_to_matrix(splats.rot)
    mean = k * (R @ splats.mu[..., None]).squeeze(-1) + T
    scale_world = k * torch.exp(splats.log_scale)
    cov = (rot_world * (scale_world ** 2)[:, None, :]) @ rot_world.transpose(-1, -2)
    return GaussianBatch(
        mean=mean,
        cov=cov,
        opacity=torch.sigmoid(splats.opacity_logit),
        color=splats.color,
        rotation=rot_world,
        scale=scale_world,
    )


def local_to_global(splat: RiggedSplat, frame: TriangleFrame) -> GaussianWorld:
    batch = local_to_global_batch(
        SplatSet.from_splats([splat.model_copy(update={"binding": 0})]),
        FrameBatch.from_frames([frame]),
    )
    return batch.gaussian(0)


def global_to_local_batch(
    mean: torch.Tensor,
    rotation: torch.Tensor,
    scale: torch.Tensor,
    frames: FrameBatch,
    binding: torch.Tensor,
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Inverse frame transform: world mean, rotation and scale to local mu, quaternion and log-scale"""
    _check_binding(binding, frames)
    R = frames.rotation[binding]
    T = frames.origin[binding]
    k = frames.scale[binding][:, None]
    mu = (R.transpose(-1, -2) @ (mean - T)[..., None]).squeeze(-1) / k
    rot = matrix_to_quaternion(R.transpose(-1, -2) @ rotation)
    return mu, rot, torch.log(scale / k)


def global_to_local(
    mean: Sequence[float], rotation: Sequence[Sequence[float]], scale: Sequence[float], frame: TriangleFrame
) -> Tuple[Tuple[float, ...], Tuple[float, ...], Tuple[float, ...]]:
    mu, rot, log_scale = global_to_local_batch(
        torch.tensor([mean], dtype=torch.float64),
        torch.tensor([rotation], dtype=torch.float64),
        torch.tensor([scale], dtype=torch.float64),
        FrameBatch.from_frames([frame]),
        torch.zeros(1, dtype=torch.long),
    )
    return tuple(mu[0].tolist()), tuple(rot[0].tolist()), tuple(torch.exp(log_scale[0]).tolist())


def sh_basis(dirs: torch.Tensor, degree: int) -> torch.Tensor:
    """(N, 3) unit directions to (N, (degree + 1)^2 - 1) real SH basis values, band 0 excluded"""
    x, y, z = dirs.unbind(-1)
    basis = []
    if degree >= 1:
        basis += [-SH_C1 * y, SH_C1 * z, -SH_C1 * x]
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        basis += [
            SH_C2[0] * x * y,
            SH_C2[1] * y * z,
            SH_C2[2] * (2 * zz - xx - yy),
            SH_C2[3] * x * z,
            SH_C2[4] * (xx - yy),
        ]
    if degree >= 3:
        basis += [
            SH_C3[0] * y * (3 * xx - yy),
            SH_C3[1] * x * y * z,
            SH_C3[2] * y * (4 * zz - xx - yy),
            SH_C3[3] * z * (2 * zz - 3 * xx - 3 * yy),
            SH_C3[4] * x * (4 * zz - xx - yy),
            SH_C3[5] * z * (xx - yy),
            SH_C3[6] * x * (xx - 3 * yy),
        ]
    if not basis:
        return dirs.new_zeros((dirs.shape[0], 0))
    return torch.stack(basis, dim=-1)


def view_dependent_color(
    color: torch.Tensor, sh_rest: torch.Tensor, means: torch.Tensor, camera_center: torch.Tensor
) -> torch.Tensor:
    """RGB plus the higher SH bands seen from the camera; degree 0 returns color unchanged"""
    if sh_rest is None or sh_rest.shape[1] == 0:
        return color
    degree = int(round((sh_rest.shape[1] + 1) ** 0.5)) - 1
    dirs = F.normalize(means - camera_center, dim=-1)
    basis = sh_basis(dirs, degree)
    return torch.clamp_min(color + (basis[..., None] * sh_rest).sum(dim=1), 0.0)
