# splat_avatar/models/geometry_model.py
"""
Geometry core models - splats, triangle frames, rig meshes and cameras
"""

import math
from dataclasses import dataclass, fields
from typing import List, Sequence, Tuple

import torch
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Vec3 = Tuple[float, float, float]
Vec4 = Tuple[float, float, float, float]
Mat3 = Tuple[Vec3, Vec3, Vec3]

ORTHO_TOL = 1e-6


def _check_rotation(matrix: Mat3, what: str) -> None:
    r = torch.tensor(matrix, dtype=torch.float64)
    if (r.T @ r - torch.eye(3, dtype=torch.float64)).abs().max() > ORTHO_TOL:
        raise ValueError(f"{what} is not orthonormal")
    if abs(torch.linalg.det(r).item() - 1.0) > ORTHO_TOL:
        raise ValueError(f"{what} has determinant != +1")


# Scalar value types
class RiggedSplat(BaseModel):
    """One Gaussian in the local frame of its binding triangle"""
    model_config = ConfigDict(frozen=True)

    mu_local: Vec3 = (0.0, 0.0, 0.0)
    rot_local: Vec4 = (1.0, 0.0, 0.0, 0.0)
    scale_local: Vec3 = (1.0, 1.0, 1.0)
    opacity_logit: float = 0.0
    color: Vec3 = (0.5, 0.5, 0.5)
    binding: int = Field(default=0, ge=0)

    @field_validator("rot_local")
    @classmethod
    def _unit_quaternion(cls, value: Vec4) -> Vec4:
        norm = math.sqrt(sum(c * c for c in value))
        if abs(norm - 1.0) >= ORTHO_TOL:
            raise ValueError(f"rot_local must be a unit quaternion (norm {norm})")
        return value

    @field_validator("scale_local")
    @classmethod
    def _positive_scale(cls, value: Vec3) -> Vec3:
        if min(value) <= 0.0:
            raise ValueError("scale_local components must be positive")
        return value

    @property
    def opacity(self) -> float:
        return 1.0 / (1.0 + math.exp(-self.opacity_logit))


class TriangleFrame(BaseModel):
    """Origin T, rotation R and scale k of one triangle"""
    model_config = ConfigDict(frozen=True)

    origin: Vec3
    rotation: Mat3
    scale: float = Field(gt=0.0)

    @field_validator("rotation")
    @classmethod
    def _orthonormal(cls, value: Mat3) -> Mat3:
        _check_rotation(value, "rotation")
        return value


class GaussianWorld(BaseModel):
    """World-space Gaussian ready for projection"""
    model_config = ConfigDict(frozen=True)

    mean: Vec3
    cov: Mat3
    opacity: float = Field(gt=0.0, lt=1.0)
    color: Vec3

    @field_validator("cov")
    @classmethod
    def _symmetric_psd(cls, value: Mat3) -> Mat3:
        c = torch.tensor(value, dtype=torch.float64)
        if (c - c.T).abs().max() > 1e-9:
            raise ValueError("cov must be symmetric")
        if torch.linalg.eigvalsh(c).min() < -1e-9:
            raise ValueError("cov must be positive semi-definite")
        return value


class Camera(BaseModel):
    """Pinhole camera with a rigid world-to-camera transform (x right, y down, z forward)"""
    model_config = ConfigDict(frozen=True)

    name: str = "camera"
    fx: float = Field(gt=0.0)
    fy: float = Field(gt=0.0)
    cx: float
    cy: float
    width: int = Field(gt=0)
    height: int = Field(gt=0)
    rotation: Mat3 = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    translation: Vec3 = (0.0, 0.0, 0.0)

    @model_validator(mode="after")
    def _check_camera(self) -> "Camera":
        if not (0.0 <= self.cx < self.width) or not (0.0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        _check_rotation(self.rotation, "camera rotation")
        return self

    def rotation_tensor(self, dtype: torch.dtype = torch.float64) -> torch.Tensor:
        return torch.tensor(self.rotation, dtype=dtype)

    def translation_tensor(self, dtype: torch.dtype = torch.float64) -> torch.Tensor:
        return torch.tensor(self.translation, dtype=dtype)

    def center(self, dtype: torch.dtype = torch.float64) -> torch.Tensor:
        """Camera position in world space"""
        return -self.rotation_tensor(dtype).T @ self.translation_tensor(dtype)

    @classmethod
    def look_at(
        cls,
        name: str,
        position: Sequence[float],
        target: Sequence[float],
        up: Sequence[float],
        fx: float,
        fy: float,
        width: int,
        height: int,
    ) -> "Camera":
        """Camera at `position` looking at `target`, world `up` mapped to image up"""
        pos = torch.tensor(position, dtype=torch.float64)
        forward = torch.tensor(target, dtype=torch.float64) - pos
        forward = forward / forward.norm()
        right = torch.linalg.cross(forward, torch.tensor(up, dtype=torch.float64))
        right = right / right.norm()
        down = torch.linalg.cross(forward, right)
        rot = torch.stack([right, down, forward])
        trans = -rot @ pos
        return cls(
            name=name, fx=fx, fy=fy, cx=width / 2.0, cy=height / 2.0,
            width=width, height=height,
            rotation=tuple(tuple(row) for row in rot.tolist()),
            translation=tuple(trans.tolist()),
        )


# Tensor batches
@dataclass
class SplatSet:
    """Struct-of-arrays form of a list of RiggedSplat (log-scale, opacity logit)"""
    mu: torch.Tensor             # (N, 3)
    rot: torch.Tensor            # (N, 4) w, x, y, z
    log_scale: torch.Tensor      # (N, 3)
    opacity_logit: torch.Tensor  # (N,)
    color: torch.Tensor          # (N, 3) RGB, the degree-0 SH band
    binding: torch.Tensor        # (N,) long
    sh_rest: torch.Tensor = None  # (N, K, 3) higher SH bands, K = (degree + 1)^2 - 1

    def __post_init__(self):
        if self.sh_rest is None:
            self.sh_rest = self.mu.new_zeros((self.mu.shape[0], 0, 3))
        n = self.mu.shape[0]
        for f in fields(self):
            value = getattr(self, f.name)
            if value.shape[0] != n:
                raise ValueError(f"{f.name} has {value.shape[0]} rows, expected {n}")

    def __len__(self) -> int:
        return self.mu.shape[0]

    @property
    def sh_degree(self) -> int:
        return int(round(math.sqrt(self.sh_rest.shape[1] + 1))) - 1

    @property
    def opacity(self) -> torch.Tensor:
        return torch.sigmoid(self.opacity_logit)

    @property
    def scale(self) -> torch.Tensor:
        return torch.exp(self.log_scale)

    def tensors(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def map(self, fn) -> "SplatSet":
        return SplatSet(**{name: fn(value) for name, value in self.tensors().items()})

    def detach(self) -> "SplatSet":
        return self.map(lambda t: t.detach().clone())

    def select(self, index: torch.Tensor) -> "SplatSet":
        return self.map(lambda t: t[index])

    def concat(self, other: "SplatSet") -> "SplatSet":
        theirs = other.tensors()
        return SplatSet(**{
            name: torch.cat([value, theirs[name]], dim=0) for name, value in self.tensors().items()
        })

    @classmethod
    def initialize(
        cls,
        num_faces: int,
        init_scale: float = 0.3,
        sh_degree: int = 0,
        dtype: torch.dtype = torch.float64,
    ) -> "SplatSet":
        """One splat per triangle at the triangle origin, identity rotation, mid-gray"""
        n = num_faces
        rot = torch.zeros((n, 4), dtype=dtype)
        rot[:, 0] = 1.0
        return cls(
            mu=torch.zeros((n, 3), dtype=dtype),
            rot=rot,
            log_scale=torch.full((n, 3), math.log(init_scale), dtype=dtype),
            opacity_logit=torch.zeros(n, dtype=dtype),
            color=torch.full((n, 3), 0.5, dtype=dtype),
            binding=torch.arange(n, dtype=torch.long),
            sh_rest=torch.zeros((n, (sh_degree + 1) ** 2 - 1, 3), dtype=dtype),
        )

    @classmethod
    def from_splats(cls, splats: List[RiggedSplat], dtype: torch.dtype = torch.float64) -> "SplatSet":
        return cls(
            mu=torch.tensor([s.mu_local for s in splats], dtype=dtype).reshape(-1, 3),
            rot=torch.tensor([s.rot_local for s in splats], dtype=dtype).reshape(-1, 4),
            log_scale=torch.log(torch.tensor([s.scale_local for s in splats], dtype=dtype).reshape(-1, 3)),
            opacity_logit=torch.tensor([s.opacity_logit for s in splats], dtype=dtype),
            color=torch.tensor([s.color for s in splats], dtype=dtype).reshape(-1, 3),
            binding=torch.tensor([s.binding for s in splats], dtype=torch.long),
        )


@dataclass
class FrameBatch:
    """Triangle frames of every face of one mesh timestep"""
    origin: torch.Tensor    # (F, 3)
    rotation: torch.Tensor  # (F, 3, 3) columns [edge, normal, edge x normal]
    scale: torch.Tensor     # (F,)

    def __len__(self) -> int:
        return self.origin.shape[0]

    def frame(self, i: int) -> TriangleFrame:
        return TriangleFrame(
            origin=tuple(self.origin[i].tolist()),
            rotation=tuple(tuple(row) for row in self.rotation[i].tolist()),
            scale=float(self.scale[i]),
        )

    def frames(self) -> List[TriangleFrame]:
        return [self.frame(i) for i in range(len(self))]

    @classmethod
    def from_frames(cls, frames: List[TriangleFrame], dtype: torch.dtype = torch.float64) -> "FrameBatch":
        return cls(
            origin=torch.tensor([f.origin for f in frames], dtype=dtype).reshape(-1, 3),
            rotation=torch.tensor([f.rotation for f in frames], dtype=dtype).reshape(-1, 3, 3),
            scale=torch.tensor([f.scale for f in frames], dtype=dtype),
        )


@dataclass
class GaussianBatch:
    """World-space Gaussians (batched GaussianWorld)"""
    mean: torch.Tensor     # (N, 3)
    cov: torch.Tensor      # (N, 3, 3)
    opacity: torch.Tensor  # (N,)
    color: torch.Tensor    # (N, 3)
    rotation: torch.Tensor = None  # (N, 3, 3) world rotation, kept for export
    scale: torch.Tensor = None     # (N, 3) world scale, kept for export

    def __len__(self) -> int:
        return self.mean.shape[0]

    def gaussian(self, i: int) -> GaussianWorld:
        return GaussianWorld(
            mean=tuple(self.mean[i].tolist()),
            cov=tuple(tuple(row) for row in self.cov[i].tolist()),
            opacity=float(self.opacity[i]),
            color=tuple(self.color[i].tolist()),
        )

    @classmethod
    def from_gaussians(cls, gaussians: List[GaussianWorld], dtype: torch.dtype = torch.float64) -> "GaussianBatch":
        return cls(
            mean=torch.tensor([g.mean for g in gaussians], dtype=dtype).reshape(-1, 3),
            cov=torch.tensor([g.cov for g in gaussians], dtype=dtype).reshape(-1, 3, 3),
            opacity=torch.tensor([g.opacity for g in gaussians], dtype=dtype),
            color=torch.tensor([g.color for g in gaussians], dtype=dtype).reshape(-1, 3),
        )


@dataclass
class RigMesh:
    """Fixed-topology triangle mesh with one vertex array per timestep"""
    faces: torch.Tensor   # (F, 3) long
    frames: torch.Tensor  # (T, V, 3)

    def __post_init__(self):
        if self.faces.numel() and (self.faces.min() < 0 or self.faces.max() >= self.frames.shape[1]):
            raise ValueError("face indices out of range for the vertex arrays")

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def num_vertices(self) -> int:
        return self.frames.shape[1]

    @classmethod
    def from_arrays(cls, faces, frames: Sequence, dtype: torch.dtype = torch.float64) -> "RigMesh":
        counts = {len(v) for v in frames}
        if len(counts) > 1:
            raise ValueError(f"frames disagree on vertex count: {sorted(counts)}")
        return cls(
            faces=torch.as_tensor(faces, dtype=torch.long).reshape(-1, 3),
            frames=torch.stack([torch.as_tensor(v, dtype=dtype).reshape(-1, 3) for v in frames]),
        )
