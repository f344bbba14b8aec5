# splat_avatar/services/dataset_service.py
"""
Dataset service - synthetic head-proxy sequences and the on-disk dataset layout

    root/
      cameras.txt                   one camera per line: name W H fx fy cx cy [R|t] row-major
      split.txt                     key: value lines
      mesh/faces.obj                shared face list
      mesh/frame_%04d.obj           per-timestep vertices
      images/<cam>/frame_%04d.png   8-bit RGB
"""

import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import trimesh
import yaml
from PIL import Image

from ..exceptions import DatasetError, IoError
from ..models.geometry_model import Camera, RigMesh
from ..models.harness_model import Dataset
from ..models.image_model import ImageBuffer
from ..core.mesh_raster import render_textured_mesh
from ..utils.logging_utils import logger

TRAIN_VIEW = "train"
EXPRESSION_VIEWS = 5
TRAIN_FRACTION = 0.8
HEAD_AXES = (0.8, 1.0, 0.9)
CAMERA_DISTANCE = 3.0
JAW_AMPLITUDE = 0.18
CAMERA_HEADER = "# name width height fx fy cx cy r00 r01 r02 t0 r10 r11 r12 t1 r20 r21 r22 t2"


def _g(value: float) -> str:
    return f"{value:.9g}"


def _round9(value: float) -> float:
    return float(_g(value))


def _quantize_camera(cam: Camera) -> Camera:
    """Camera whose parameters survive a %.9g round trip unchanged"""
    return cam.model_copy(update={
        "fx": _round9(cam.fx), "fy": _round9(cam.fy), "cx": _round9(cam.cx), "cy": _round9(cam.cy),
        "rotation": tuple(tuple(_round9(v) for v in row) for row in cam.rotation),
        "translation": tuple(_round9(v) for v in cam.translation),
    })


# Synthetic scene
def head_proxy(seed: int, subdivisions: int = 3) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ellipsoid vertices, faces and a procedural per-vertex texture"""
    sphere = trimesh.creation.icosphere(subdivisions=subdivisions, radius=1.0)
    vertices = np.asarray(sphere.vertices, dtype=np.float64) * np.asarray(HEAD_AXES)
    faces = np.asarray(sphere.faces, dtype=np.int64)

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7E]))
    freq = rng.uniform(2.0, 5.0, size=(3, 3))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=3)
    unit = vertices / np.asarray(HEAD_AXES)
    texture = 0.5 + 0.35 * np.sin(unit @ freq + phase)
    # darker band where a mouth would sit
    mouth = np.exp(-((unit[:, 1] + 0.45) ** 2) / 0.01) * np.clip(unit[:, 2], 0.0, 1.0)
    texture = texture * (1.0 - 0.6 * mouth[:, None])
    return vertices, faces, np.clip(texture, 0.0, 1.0)


def jaw_weight(vertices: np.ndarray) -> np.ndarray:
    """Smooth weight that is non-zero only on the lower front of the head"""
    unit = vertices / np.asarray(HEAD_AXES)
    below = np.clip((-unit[:, 1] - 0.3) / 0.7, 0.0, 1.0)
    front = np.clip(unit[:, 2], 0.0, 1.0)
    return below * front


def deform_sequence(vertices: np.ndarray, n_frames: int) -> np.ndarray:
    """(T, V, 3) jaw opening and closing once over the sequence"""
    weight = jaw_weight(vertices)
    frames = []
    for t in range(n_frames):
        opening = JAW_AMPLITUDE * math.sin(math.pi * t / n_frames) ** 2
        moved = vertices.copy()
        moved[:, 1] -= opening * weight
        moved[:, 2] += 0.3 * opening * weight
        frames.append(moved)
    return np.stack(frames)


def make_cameras(n_heldout_cams: int, image_size: int) -> Tuple[Camera, List[Camera]]:
    """Frontal train camera and held-out cameras on the horizontal arc through it, -90 to +90 degrees"""
    focal = 0.9 * image_size
    train = Camera.look_at(
        TRAIN_VIEW, (0.0, 0.0, CAMERA_DISTANCE), (0.0, 0.0, 0.0), (0.0, 1.0, 0.0),
        focal, focal, image_size, image_size,
    )
    heldout = []
    for i, angle in enumerate(np.linspace(-90.0, 90.0, n_heldout_cams) if n_heldout_cams > 1 else [0.0]):
        theta = math.radians(float(angle))
        position = (CAMERA_DISTANCE * math.sin(theta), 0.0, CAMERA_DISTANCE * math.cos(theta))
        heldout.append(Camera.look_at(
            f"cam_{i:02d}", position, (0.0, 0.0, 0.0), (0.0, 1.0, 0.0), focal, focal, image_size, image_size,
        ))
    return _quantize_camera(train), [_quantize_camera(c) for c in heldout]


def split_timesteps(n_frames: int) -> Tuple[List[int], List[int]]:
    n_train = max(1, int(round(TRAIN_FRACTION * n_frames)))
    return list(range(n_train)), list(range(n_train, n_frames))


def expression_views(heldout: Sequence[Camera], train: Camera, count: int = EXPRESSION_VIEWS) -> List[str]:
    """Held-out cameras closest to the train camera"""
    center = train.center()
    ranked = sorted(range(len(heldout)), key=lambda i: (float((heldout[i].center() - center).norm()), i))
    return sorted(heldout[i].name for i in ranked[:count])


def synth_dataset(
    seed: int,
    n_frames: int,
    n_heldout_cams: int,
    out_dir: Union[str, Path],
    image_size: int = 64,
) -> Dataset:
    """Render a deterministic head-proxy sequence and write the full layout"""
    if n_frames < 1:
        raise DatasetError("n_frames must be at least 1")
    root = Path(out_dir)
    vertices, faces, texture = head_proxy(seed)
    mesh = RigMesh.from_arrays(faces, list(deform_sequence(vertices, n_frames)))
    train_cam, heldout = make_cameras(n_heldout_cams, image_size)
    train_steps, test_steps = split_timesteps(n_frames)

    dataset = Dataset(
        root=root,
        cameras={cam.name: cam for cam in [train_cam] + heldout},
        train_view=train_cam.name,
        heldout_views=[cam.name for cam in heldout],
        expression_views=expression_views(heldout, train_cam),
        n_frames=n_frames,
        train_timesteps=train_steps,
        test_timesteps=test_steps,
    )
    save_dataset(dataset)
    write_mesh(dataset, mesh)

    tex = torch.from_numpy(texture)
    count = 0
    for cam in dataset.cameras.values():
        for t in range(n_frames):
            save_image(dataset.image_path(cam.name, t), render_textured_mesh(mesh, t, tex, cam).data)
            count += 1
    logger.log_dataset_written(str(root), count)
    return dataset


# Cameras
def write_cameras(path: Path, cameras: Dict[str, Camera]):
    lines = [CAMERA_HEADER]
    for name, cam in cameras.items():
        values = [cam.fx, cam.fy, cam.cx, cam.cy]
        for row, t in zip(cam.rotation, cam.translation):
            values.extend([*row, t])
        lines.append(" ".join([name, str(cam.width), str(cam.height)] + [_g(float(v)) for v in values]))
    _write_text(path, "\n".join(lines) + "\n")


def read_cameras(path: Path) -> Dict[str, Camera]:
    cameras = {}
    for number, line in enumerate(_read_text(path).splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 19:
            raise DatasetError(f"{path}:{number}: expected 19 fields, found {len(parts)}")
        try:
            nums = [float(v) for v in parts[7:]]
            cameras[parts[0]] = Camera(
                name=parts[0], width=int(parts[1]), height=int(parts[2]),
                fx=float(parts[3]), fy=float(parts[4]), cx=float(parts[5]), cy=float(parts[6]),
                rotation=tuple(tuple(nums[4 * r: 4 * r + 3]) for r in range(3)),
                translation=tuple(nums[4 * r + 3] for r in range(3)),
            )
        except ValueError as e:
            raise DatasetError(f"{path}:{number}: invalid camera: {e}")
    return cameras


# Meshes
def write_mesh(dataset: Dataset, mesh: RigMesh):
    faces = mesh.faces.tolist()
    _write_text(dataset.faces_path, "".join(f"f {a + 1} {b + 1} {c + 1}\n" for a, b, c in faces))
    for t in range(mesh.num_frames):
        rows = mesh.frames[t].tolist()
        _write_text(dataset.mesh_path(t), "".join(f"v {_g(x)} {_g(y)} {_g(z)}\n" for x, y, z in rows))


def _obj_records(path: Path, tag: str) -> List[List[str]]:
    return [line.split()[1:] for line in _read_text(path).splitlines() if line.startswith(tag + " ")]


def read_mesh(dataset: Dataset, dtype: torch.dtype = torch.float64) -> RigMesh:
    """Shared faces plus one vertex file per timestep"""
    try:
        faces = [[int(v.split("/")[0]) - 1 for v in rec] for rec in _obj_records(dataset.faces_path, "f")]
        frames = [
            [[float(v) for v in rec] for rec in _obj_records(dataset.mesh_path(t), "v")]
            for t in range(dataset.n_frames)
        ]
        return RigMesh.from_arrays(faces, frames, dtype=dtype)
    except ValueError as e:
        raise DatasetError(f"invalid mesh files under {dataset.root / 'mesh'}: {e}")


# Images
def save_image(path: Union[str, Path], image: torch.Tensor):
    path = Path(path)
    array = ImageBuffer(image.detach()).to_uint8()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        mode = "L" if array.shape[-1] == 1 else ("RGBA" if array.shape[-1] == 4 else "RGB")
        Image.fromarray(array[..., 0] if mode == "L" else array, mode=mode).save(path, format="PNG")
    except OSError as e:
        raise IoError(f"cannot write image: {e}", path=str(path))


def load_image(path: Union[str, Path], dtype: torch.dtype = torch.float64) -> torch.Tensor:
    try:
        with Image.open(path) as img:
            array = np.asarray(img.convert("RGB"))
    except FileNotFoundError:
        raise IoError("image not found", path=str(path))
    except OSError as e:
        raise IoError(f"cannot read image: {e}", path=str(path))
    return ImageBuffer.from_uint8(array, dtype=dtype).data


class DatasetImages:
    """Cached (camera, timestep) -> image lookup over a dataset"""

    def __init__(self, dataset: Dataset, dtype: torch.dtype = torch.float64):
        self.dataset = dataset
        self.dtype = dtype
        self._cache: Dict[Tuple[str, int], torch.Tensor] = {}

    def __call__(self, camera: str, timestep: int) -> Optional[torch.Tensor]:
        key = (camera, timestep)
        if key not in self._cache:
            path = self.dataset.image_path(camera, timestep)
            if camera not in self.dataset.cameras or not path.exists():
                return None
            self._cache[key] = load_image(path, self.dtype)
        return self._cache[key]


# Layout
def save_dataset(dataset: Dataset):
    """Write cameras.txt and split.txt (images and meshes are written separately)"""
    write_cameras(dataset.root / "cameras.txt", dataset.cameras)
    split = {
        "train_view": dataset.train_view,
        "heldout_views": list(dataset.heldout_views),
        "expression_views": list(dataset.expression_views),
        "n_frames": dataset.n_frames,
        "train_timesteps": list(dataset.train_timesteps),
        "test_timesteps": list(dataset.test_timesteps),
    }
    _write_text(
        dataset.root / "split.txt",
        yaml.safe_dump(split, sort_keys=False, default_flow_style=None, width=1 << 16),
    )


def load_dataset(root: Union[str, Path], check_files: bool = True) -> Dataset:
    """Read the layout back and verify every referenced file exists with its camera's size"""
    root = Path(root)
    cameras = read_cameras(root / "cameras.txt")
    try:
        split = yaml.safe_load(_read_text(root / "split.txt"))
    except yaml.YAMLError as e:
        raise DatasetError(f"{root / 'split.txt'} is not valid: {e}")
    if not isinstance(split, dict):
        raise DatasetError(f"{root / 'split.txt'} must hold key: value lines")
    try:
        dataset = Dataset(root=root, cameras=cameras, **split)
    except (TypeError, ValueError) as e:
        raise DatasetError(f"{root / 'split.txt'}: {e}")

    views = [dataset.train_view] + dataset.heldout_views
    unknown = [v for v in views + dataset.expression_views if v not in cameras]
    if unknown:
        raise DatasetError(f"split references unknown camera '{unknown[0]}'")
    if check_files:
        _check_files(dataset, views)
    return dataset


def _check_files(dataset: Dataset, views: List[str]):
    required = [dataset.faces_path] + [dataset.mesh_path(t) for t in range(dataset.n_frames)]
    for path in required:
        if not path.exists():
            raise DatasetError(f"missing file {path}")
    for view in views:
        cam = dataset.cameras[view]
        for t in range(dataset.n_frames):
            path = dataset.image_path(view, t)
            if not path.exists():
                raise DatasetError(f"missing image {path}")
            with Image.open(path) as img:
                if img.size != (cam.width, cam.height):
                    raise DatasetError(f"{path} is {img.size[0]}x{img.size[1]}, camera '{view}' is {cam.width}x{cam.height}")


def _write_text(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write file: {e}", path=str(path))


def _read_text(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DatasetError(f"missing file {path}")
    except OSError as e:
        raise IoError(f"cannot read file: {e}", path=str(path))
