# splat_avatar/core/mesh_raster.py
"""
Flat-shaded z-buffer rasterizer for the tracked mesh: normal maps and vertex-coloured references
"""

from dataclasses import dataclass

import torch

from ..exceptions import ShapeMismatch
from ..models.geometry_model import Camera, RigMesh
from ..models.image_model import ImageBuffer
from ..utils.logging_utils import logger
from .geometry import DEGENERATE_AREA
from .projection import NEAR_PLANE

FACE_CHUNK = 64
EDGE_ON_AREA = 1e-12


@dataclass
class Fragments:
    """Front-most face per pixel (-1 on background) and its perspective-correct barycentrics"""
    face: torch.Tensor  # (H, W) long
    bary: torch.Tensor  # (H, W, 3)
    depth: torch.Tensor  # (H, W), inf on background
    skipped: int = 0


def _camera_vertices(mesh: RigMesh, timestep: int, cam: Camera) -> torch.Tensor:
    verts = mesh.frames[timestep]
    rot = cam.rotation_tensor(verts.dtype)
    return verts @ rot.T + cam.translation_tensor(verts.dtype)


def rasterize_mesh(mesh: RigMesh, timestep: int, cam: Camera, chunk: int = FACE_CHUNK) -> Fragments:
    """
    Z-buffer over pixel centres, faces processed in ascending index order

    Depth ties keep the lower face index. Degenerate faces are skipped and counted; faces
    crossing the near plane are not clipped and are dropped.
    """
    h, w = cam.height, cam.width
    dtype = mesh.frames.dtype
    face_buf = torch.full((h, w), -1, dtype=torch.long)
    bary_buf = torch.zeros(h, w, 3, dtype=dtype)
    depth_buf = torch.full((h, w), float("inf"), dtype=dtype)
    if mesh.num_faces == 0:
        return Fragments(face_buf, bary_buf, depth_buf)

    v_cam = _camera_vertices(mesh, timestep, cam)
    world = mesh.frames[timestep][mesh.faces]
    world_area = 0.5 * torch.linalg.cross(world[:, 1] - world[:, 0], world[:, 2] - world[:, 0], dim=-1).norm(dim=-1)
    degenerate_world = world_area <= DEGENERATE_AREA
    z = v_cam[:, 2]
    in_front = z > NEAR_PLANE
    safe_z = torch.where(in_front, z, torch.ones_like(z))
    px = torch.stack([cam.fx * v_cam[:, 0] / safe_z + cam.cx, cam.fy * v_cam[:, 1] / safe_z + cam.cy], -1)

    ys, xs = torch.meshgrid(
        torch.arange(h, dtype=dtype) + 0.5, torch.arange(w, dtype=dtype) + 0.5, indexing="ij"
    )
    pix = torch.stack([xs.reshape(-1), ys.reshape(-1)], -1)  # (P, 2)
    flat_face = face_buf.view(-1)
    flat_bary = bary_buf.view(-1, 3)
    flat_depth = depth_buf.view(-1)

    skipped = 0
    for start in range(0, mesh.num_faces, chunk):
        faces = mesh.faces[start:start + chunk]
        p = px[faces]  # (C, 3, 2)
        fz = z[faces]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        area = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        degenerate = degenerate_world[start:start + chunk]
        skipped += int(degenerate.sum())
        # edge-on faces cover no pixel centre
        usable = in_front[faces].all(-1) & ~degenerate & (area.abs() > EDGE_ON_AREA)
        if not usable.any():
            continue

        safe_area = torch.where(usable, area, torch.ones_like(area))
        d = pix[None, :, :] - p[:, None, 0, :]  # (C, P, 2)
        b1 = (d[..., 0] * e2[:, None, 1] - d[..., 1] * e2[:, None, 0]) / safe_area[:, None]
        b2 = (e1[:, None, 0] * d[..., 1] - e1[:, None, 1] * d[..., 0]) / safe_area[:, None]
        screen = torch.stack([1.0 - b1 - b2, b1, b2], -1)  # (C, P, 3)
        inside = (screen >= 0).all(-1) & usable[:, None]

        # Perspective-correct: interpolate 1/z linearly in screen space
        inv_z = screen / fz[:, None, :]
        inv_depth = inv_z.sum(-1)
        depth = torch.where(inside, 1.0 / inv_depth.clamp_min(1e-12), torch.full_like(inv_depth, float("inf")))

        best_depth, best = depth.min(dim=0)
        closer = best_depth < flat_depth
        if not closer.any():
            continue
        rows = closer.nonzero().squeeze(-1)
        chosen = best[rows]
        flat_depth[rows] = best_depth[rows]
        flat_face[rows] = start + chosen
        flat_bary[rows] = inv_z[chosen, rows] / inv_depth[chosen, rows][:, None]

    return Fragments(face_buf, bary_buf, depth_buf, skipped)


def _warn_skipped(fragments: Fragments, what: str):
    if fragments.skipped:
        logger.warning(f"⚠️ {what}: skipped {fragments.skipped} degenerate face(s)")


def face_normals_camera(mesh: RigMesh, timestep: int, cam: Camera) -> torch.Tensor:
    """Unit winding-order face normals in camera space; zero for degenerate faces"""
    v_cam = _camera_vertices(mesh, timestep, cam)
    tri = v_cam[mesh.faces]
    n = torch.linalg.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0], dim=-1)
    length = n.norm(dim=-1, keepdim=True)
    return torch.where(length > 0, n / length.clamp_min(1e-300), torch.zeros_like(n))


def render_normal_map(mesh: RigMesh, timestep: int, cam: Camera) -> ImageBuffer:
    """((n_x, n_y, -n_z) + 1) / 2 per covered pixel, black background"""
    fragments = rasterize_mesh(mesh, timestep, cam)
    _warn_skipped(fragments, "normal map")
    image = torch.zeros(cam.height, cam.width, 3, dtype=mesh.frames.dtype)
    covered = fragments.face >= 0
    if covered.any():
        n = face_normals_camera(mesh, timestep, cam)[fragments.face[covered]]
        flip = torch.tensor([1.0, 1.0, -1.0], dtype=n.dtype)
        image[covered] = (n * flip + 1.0) / 2.0
    return ImageBuffer(image)


def render_textured_mesh(mesh: RigMesh, timestep: int, texture: torch.Tensor, cam: Camera) -> ImageBuffer:
    """Barycentric interpolation of per-vertex RGB, black background"""
    texture = torch.as_tensor(texture, dtype=mesh.frames.dtype)
    if texture.shape != (mesh.num_vertices, 3):
        raise ShapeMismatch(f"texture {tuple(texture.shape)} does not match {mesh.num_vertices} vertices")
    fragments = rasterize_mesh(mesh, timestep, cam)
    _warn_skipped(fragments, "textured render")
    image = torch.zeros(cam.height, cam.width, 3, dtype=texture.dtype)
    covered = fragments.face >= 0
    if covered.any():
        corner_colors = texture[mesh.faces[fragments.face[covered]]]  # (P, 3, 3)
        image[covered] = (fragments.bary[covered][..., None] * corner_colors).sum(-2)
    return ImageBuffer(image)
