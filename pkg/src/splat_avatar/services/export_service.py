# splat_avatar/services/export_service.py
"""
Export service - world-space splats as binary little-endian 3DGS PLY files
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Union

import numpy as np
import torch
from plyfile import PlyData, PlyElement

from ..core.geometry import local_to_global_batch, matrix_to_quaternion
from ..exceptions import IoError
from ..models.geometry_model import FrameBatch, SplatSet

SH_C0 = 0.28209479177387814


def RGB2SH(rgb):
    return (rgb - 0.5) / SH_C0


def SH2RGB(sh):
    return sh * SH_C0 + 0.5


def construct_list_of_attributes(sh_rest_count: int = 0) -> List[str]:
    l = ['x', 'y', 'z']
    for i in range(3):
        l.append(f'f_dc_{i}')
    for i in range(3 * sh_rest_count):
        l.append(f'f_rest_{i}')
    l.append('opacity')
    for i in range(3):
        l.append(f'scale_{i}')
    for i in range(4):
        l.append(f'rot_{i}')
    return l


@dataclass
class WorldSplats:
    """Splats as stored in a PLY file: world mean, rotation, scale, opacity and colour"""
    mean: torch.Tensor      # (N, 3)
    rot: torch.Tensor       # (N, 4) w, x, y, z
    scale: torch.Tensor     # (N, 3)
    opacity: torch.Tensor   # (N,)
    color: torch.Tensor     # (N, 3)
    sh_rest: torch.Tensor   # (N, K, 3)

    def __len__(self) -> int:
        return self.mean.shape[0]


def world_splats(splats: SplatSet, frames: FrameBatch) -> WorldSplats:
    with torch.no_grad():
        g = local_to_global_batch(splats.detach(), frames)
        return WorldSplats(
            mean=g.mean,
            rot=matrix_to_quaternion(g.rotation),
            scale=g.scale,
            opacity=g.opacity,
            color=g.color,
            sh_rest=splats.sh_rest.detach(),
        )


def export_splats_ply(splats: SplatSet, frames: FrameBatch, path: Union[str, Path]):
    """Write the splats posed by `frames` (one timestep) as a 3DGS vertex PLY"""
    world = world_splats(splats, frames)
    n, k = len(world), world.sh_rest.shape[1]

    xyz = world.mean.cpu().numpy()
    f_dc = RGB2SH(world.color).cpu().numpy()
    f_rest = world.sh_rest.transpose(1, 2).reshape(n, 3 * k).cpu().numpy()
    opacities = splats.opacity_logit.detach().reshape(n, 1).cpu().numpy()
    scale = torch.log(world.scale).cpu().numpy()
    rotation = world.rot.cpu().numpy()

    dtype_full = [(attribute, '<f4') for attribute in construct_list_of_attributes(k)]
    elements = np.empty(n, dtype=dtype_full)
    attributes = np.concatenate((xyz, f_dc, f_rest, opacities, scale, rotation), axis=1)
    elements[:] = list(map(tuple, attributes))
    el = PlyElement.describe(elements, 'vertex')
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        PlyData([el], byte_order='<').write(str(path))
    except OSError as e:
        raise IoError(f"cannot write PLY: {e}", path=str(path))


def import_splats_ply(path: Union[str, Path], dtype: torch.dtype = torch.float64) -> WorldSplats:
    """Read a file written by export_splats_ply back into world-space records"""
    try:
        plydata = PlyData.read(str(path))
    except FileNotFoundError:
        raise IoError("PLY file not found", path=str(path))
    except (OSError, ValueError) as e:
        raise IoError(f"cannot read PLY: {e}", path=str(path))

    vertex = plydata['vertex']
    names = [p.name for p in vertex.properties]
    rest_names = sorted((p for p in names if p.startswith('f_rest_')), key=lambda x: int(x.split('_')[-1]))

    def column(*keys):
        return torch.from_numpy(np.stack([np.asarray(vertex[key], dtype=np.float64) for key in keys], axis=1)).to(dtype)

    n = len(vertex.data)
    k = len(rest_names) // 3
    sh_rest = column(*rest_names).reshape(n, 3, k).transpose(1, 2) if k else torch.zeros((n, 0, 3), dtype=dtype)
    return WorldSplats(
        mean=column('x', 'y', 'z'),
        rot=column('rot_0', 'rot_1', 'rot_2', 'rot_3'),
        scale=torch.exp(column('scale_0', 'scale_1', 'scale_2')),
        opacity=torch.sigmoid(column('opacity')[:, 0]),
        color=SH2RGB(column('f_dc_0', 'f_dc_1', 'f_dc_2')),
        sh_rest=sh_rest.contiguous(),
    )
