# splat_avatar/services/training_service.py
"""
Training service - input-view reconstruction plus sampled-view supervision, with densification
"""

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

import numpy as np
import torch
from tqdm import tqdm

from ..config.training_config import TrainingConfig
from ..core.densify import apply_to_optimizer, densify_and_prune, should_densify, should_prune_only
from ..core.geometry import build_frame_batch
from ..core.gradients import accumulate_densify_stats, collect_gradients
from ..core.losses import total_loss
from ..core.mesh_raster import render_normal_map
from ..core.optimizer import GaussianOptimizer
from ..core.rasterizer import render_splats
from ..exceptions import DatasetError, EmptyDataset, IoError, OracleFailure, SplatAvatarError
from ..models.geometry_model import Camera, FrameBatch, RigMesh, SplatSet
from ..models.harness_model import Dataset
from ..models.image_model import DensifyStats
from ..models.training_model import TrainingRecord, TrainingResult, ViewSupervision
from ..utils.logging_utils import logger
from .dataset_service import DatasetImages, read_mesh
from .prior_service import OracleRequest, ViewPriorOracle, view_generator

DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass
class TrainingScene:
    """Everything the loop reads from a dataset"""
    mesh: RigMesh
    cameras: Dict[str, Camera]
    train_view: str
    timesteps: List[int]
    camera_pool: List[str]
    images: Callable[[str, int], Optional[torch.Tensor]]
    _frames: Dict[int, FrameBatch] = field(default_factory=dict)
    _normals: Dict[tuple, torch.Tensor] = field(default_factory=dict)

    @classmethod
    def from_dataset(cls, dataset: Dataset, dtype: torch.dtype = torch.float64) -> "TrainingScene":
        return cls(
            mesh=read_mesh(dataset, dtype=dtype),
            cameras=dict(dataset.cameras),
            train_view=dataset.train_view,
            timesteps=list(dataset.train_timesteps),
            camera_pool=list(dataset.heldout_views),
            images=DatasetImages(dataset, dtype=dtype),
        )

    def frames(self, timestep: int) -> FrameBatch:
        if timestep not in self._frames:
            self._frames[timestep] = build_frame_batch(self.mesh, timestep)
        return self._frames[timestep]

    def normal_map(self, view: str, timestep: int) -> torch.Tensor:
        key = (view, timestep)
        if key not in self._normals:
            self._normals[key] = render_normal_map(self.mesh, timestep, self.cameras[view]).data
        return self._normals[key]

    def train_image(self, timestep: int) -> torch.Tensor:
        image = self.images(self.train_view, timestep)
        if image is None:
            raise DatasetError(f"no input image for camera '{self.train_view}' at timestep {timestep}")
        return image


# Checkpoints
def save_checkpoint(path: Union[str, Path], splats: SplatSet, iteration: int, config: TrainingConfig):
    payload = {
        "splats": {name: t.detach().cpu() for name, t in splats.tensors().items()},
        "iteration": iteration,
        "config": config.to_flat_dict(),
    }
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        torch.save(payload, str(path))
    except OSError as e:
        raise IoError(f"cannot write checkpoint: {e}", path=str(path))


def load_checkpoint(path: Union[str, Path]) -> tuple:
    """(splats, iteration, config) from a checkpoint file"""
    try:
        payload = torch.load(str(path), map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise IoError("checkpoint not found", path=str(path))
    except (OSError, RuntimeError) as e:
        raise IoError(f"cannot read checkpoint: {e}", path=str(path))
    return SplatSet(**payload["splats"]), int(payload["iteration"]), TrainingConfig(**payload["config"])


def _sample_iteration(seed: int, iteration: int, timesteps: List[int], pool: List[str], views: int):
    rng = np.random.default_rng(np.random.SeedSequence([seed, iteration]))
    frame = timesteps[int(rng.integers(len(timesteps)))]
    if not pool or views == 0:
        return frame, []
    chosen = rng.choice(len(pool), size=min(views, len(pool)), replace=False)
    return frame, [pool[int(i)] for i in chosen]


class TrainingLog:
    """Line-delimited training records, also kept in memory"""

    def __init__(self, path: Optional[Path] = None):
        self.path = path
        self.records: List[TrainingRecord] = []
        if path is not None:
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_text("", encoding="utf-8")
            except OSError as e:
                raise IoError(f"cannot create training log: {e}", path=str(path))

    def append(self, record: TrainingRecord):
        self.records.append(record)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as file:
                file.write(record.model_dump_json() + "\n")


def train_avatar(
    scene: Union[TrainingScene, Dataset],
    oracle: Optional[ViewPriorOracle],
    config: TrainingConfig,
    out_dir: Optional[Union[str, Path]] = None,
    workers: Optional[int] = None,
    progress: bool = False,
    init: Optional[SplatSet] = None,
) -> TrainingResult:
    """
    Optimise one splat per triangle (or `init`) against the input view and oracle targets

    Every random draw derives from (seed, iteration[, view]) so runs are reproducible.
    """
    dtype = DTYPES[config.dtype]
    if isinstance(scene, Dataset):
        scene = TrainingScene.from_dataset(scene, dtype=dtype)
    if not scene.timesteps:
        raise EmptyDataset("dataset has no training timesteps")

    supervised = config.view_supervision != ViewSupervision.OFF and oracle is not None
    if supervised and not scene.camera_pool:
        raise DatasetError("view supervision needs a non-empty camera pool")

    out = Path(out_dir) if out_dir is not None else None
    log = TrainingLog(out / "train_log.jsonl" if out else None)
    splats = init if init is not None else SplatSet.initialize(
        scene.mesh.num_faces, config.init_scale, config.sh_degree, dtype=dtype
    )
    optimizer = GaussianOptimizer(splats, config)
    stats = DensifyStats.zeros(len(optimizer), dtype=dtype)
    weights = config.loss_weights()
    lineage = []
    train_cam = scene.cameras[scene.train_view]

    logger.log_training_start(len(optimizer), config.iterations, config.view_supervision.value if supervised else "off")
    start = time.time()
    for iteration in tqdm(range(1, config.iterations + 1), desc="train", disable=not progress):
        frame, views = _sample_iteration(
            config.seed, iteration, scene.timesteps, scene.camera_pool if supervised else [], config.views_per_iter
        )
        frames = scene.frames(frame)
        params = optimizer.params
        target = scene.train_image(frame)

        optimizer.zero_grad()
        rec = render_splats(params, frames, train_cam, workers=workers)
        view_outputs = [render_splats(params, frames, scene.cameras[v], workers=workers) for v in views]
        view_targets = []
        if views:
            request = OracleRequest(
                cond_image=target,
                renders=[o.color.detach() for o in view_outputs],
                normals=[scene.normal_map(v, frame) for v in views],
                cameras=views,
                timestep=frame,
                generators=[view_generator(config.seed, iteration, j) for j in range(len(views))],
            )
            try:
                view_targets = oracle(request)
            except SplatAvatarError as e:
                raise OracleFailure(e.message, iteration=iteration) from e
            except Exception as e:
                raise OracleFailure(str(e), iteration=iteration) from e

        result = total_loss(
            (rec.color, target),
            list(zip([o.color for o in view_outputs], view_targets)),
            params,
            weights,
            sds_views=bool(views) and oracle.produces_gradients,
        )
        outputs = [result.total, rec.color] + [o.color for o in view_outputs]
        grads = [None] + result.image_grads
        pairs = [(t, g) for t, g in zip(outputs, grads) if t.requires_grad]
        if pairs:
            torch.autograd.backward([t for t, _ in pairs], [g for _, g in pairs])

        stats = accumulate_densify_stats(collect_gradients(params, rec), stats)
        optimizer.step()

        densify = should_densify(iteration, config)
        if densify or should_prune_only(iteration, config):
            edit = densify_and_prune(optimizer.splats(), stats, config, iteration, densify=densify)
            apply_to_optimizer(edit, optimizer)
            stats = edit.stats
            lineage.extend(edit.lineage)
            logger.log_densify(iteration, edit.cloned, edit.split, edit.pruned, len(optimizer))

        record = TrainingRecord(
            iteration=iteration,
            frame=frame,
            views=views,
            losses=result.breakdown,
            splat_count=len(optimizer),
            elapsed=time.time() - start,
        )
        log.append(record)
        if iteration % config.log_every == 0:
            logger.log_iteration(iteration, result.breakdown, len(optimizer))
        if out and iteration % config.checkpoint_every == 0 and iteration < config.iterations:
            save_checkpoint(out / f"checkpoint_{iteration:06d}.pt", optimizer.splats(), iteration, config)

    final = optimizer.splats()
    checkpoint = None
    if out:
        checkpoint = out / "checkpoint_final.pt"
        save_checkpoint(checkpoint, final, config.iterations, config)
        _write_lineage(out / "lineage.jsonl", lineage)
    logger.log_training_complete(config.iterations, time.time() - start, len(final))
    return TrainingResult(
        splats=final,
        records=log.records,
        lineage=lineage,
        checkpoint=str(checkpoint) if checkpoint else None,
    )


def _write_lineage(path: Path, lineage: list):
    try:
        with open(path, "w", encoding="utf-8") as file:
            for event in lineage:
                file.write(json.dumps(event.__dict__) + "\n")
    except OSError as e:
        raise IoError(f"cannot write lineage log: {e}", path=str(path))
