# splat_avatar/controllers/cli_controller.py
"""
CLI controller - turns parsed arguments into service calls and writes their artifacts
"""

import sys
from argparse import Namespace

import torch

from ..core.config_loader import ConfigLoader
from ..core.geometry import build_frame_batch
from ..core.rasterizer import render_splats
from ..dependencies.service_dependencies import get_config, get_dataset, get_out_dir, get_workers
from ..exceptions import DatasetError
from ..models.harness_model import EvalSplit
from ..services.ablation_service import run_ablation
from ..services.dataset_service import DatasetImages, read_mesh, save_image, synth_dataset
from ..services.eval_service import eval_split, write_eval_reports
from ..services.export_service import export_splats_ply
from ..services.prior_service import build_oracle
from ..services.training_service import DTYPES, TrainingScene, load_checkpoint, train_avatar
from ..utils.logging_utils import logger


class CliController:
    """One method per sub-command; each returns the process exit status"""

    def train(self, args: Namespace) -> int:
        config = get_config(args.config, args.set)
        dataset = get_dataset(args.dataset)
        out = get_out_dir(args.out)
        dtype = DTYPES[config.dtype]
        scene = TrainingScene.from_dataset(dataset, dtype=dtype)
        oracle = build_oracle(config, DatasetImages(dataset, dtype=dtype))
        ConfigLoader.write(out / "config.yaml", config)
        result = train_avatar(
            scene, oracle, config, out_dir=out, workers=get_workers(args.threads), progress=args.progress
        )
        logger.info(f"✅ Checkpoint written: {result.checkpoint}")
        return 0

    def render(self, args: Namespace) -> int:
        dataset = get_dataset(args.dataset)
        splats, _, _ = load_checkpoint(args.checkpoint)
        mesh = read_mesh(dataset, dtype=splats.mu.dtype)
        timestep = self._timestep(args.timestep, mesh.num_frames)
        cameras = args.camera or list(dataset.cameras)
        unknown = [c for c in cameras if c not in dataset.cameras]
        if unknown:
            raise DatasetError(f"unknown camera '{unknown[0]}'")

        out = get_out_dir(args.out)
        frames = build_frame_batch(mesh, timestep)
        for name in cameras:
            with torch.no_grad():
                image = render_splats(splats, frames, dataset.cameras[name], workers=get_workers(args.threads)).color
            path = out / f"render_{name}_t{timestep:04d}.png"
            save_image(path, image)
            logger.info(f"✅ Rendered {path}")
        return 0

    def eval(self, args: Namespace) -> int:
        dataset = get_dataset(args.dataset)
        splats, _, _ = load_checkpoint(args.checkpoint)
        mesh = read_mesh(dataset, dtype=splats.mu.dtype)
        if args.split == "all":
            splits = [split for split in EvalSplit if dataset.split_pairs(split)]
        else:
            splits = [EvalSplit(args.split)]
        lookup = DatasetImages(dataset, dtype=splats.mu.dtype)
        reports = [eval_split(splats, dataset, split, mesh, lookup, get_workers(args.threads)) for split in splits]
        text_path, _ = write_eval_reports(reports, get_out_dir(args.out))
        sys.stdout.write(text_path.read_text(encoding="utf-8"))
        return 0

    def synth(self, args: Namespace) -> int:
        synth_dataset(args.seed, args.frames, args.heldout, get_out_dir(args.out), image_size=args.size)
        return 0

    def export(self, args: Namespace) -> int:
        dataset = get_dataset(args.dataset)
        splats, _, _ = load_checkpoint(args.checkpoint)
        mesh = read_mesh(dataset, dtype=splats.mu.dtype)
        timestep = self._timestep(args.timestep, mesh.num_frames)
        export_splats_ply(splats, build_frame_batch(mesh, timestep), args.out)
        logger.info(f"✅ Exported {len(splats)} splats to {args.out}")
        return 0

    def ablate(self, args: Namespace) -> int:
        config = get_config(args.config, args.set)
        dataset = get_dataset(args.dataset)
        run_ablation(dataset, config, get_out_dir(args.out), args.variants, get_workers(args.threads))
        return 0

    def default_config(self, args: Namespace) -> int:
        if args.out:
            ConfigLoader.write(args.out)
        else:
            sys.stdout.write(ConfigLoader.dump(get_config(None)))
        return 0

    @staticmethod
    def _timestep(timestep: int, n_frames: int) -> int:
        if not 0 <= timestep < n_frames:
            raise DatasetError(f"timestep {timestep} outside [0, {n_frames})")
        return timestep
