import logging
from argparse import Namespace
from pathlib import Path

import torch

from ..config import TrainConfig
from ..errors import RejectedInputError
from ..services.render_service import render_service
from ..services.scene_io import load_scene, write_render
from ..services.trainer import load_checkpoint, trainer
from ..types import CommandResult

logger = logging.getLogger("neuralmvs.commands.rendering")


def render_command(args: Namespace) -> CommandResult:
    checkpoint = load_checkpoint(args.checkpoint)
    dataset = load_scene(args.data)
    if not 0 <= args.view_index < len(dataset.views):
        raise RejectedInputError(f"View index {args.view_index} out of range [0, {len(dataset.views)})")
    model = trainer.model_from_checkpoint(checkpoint).eval()
    method = TrainConfig.from_dict(checkpoint.config).toggles.view_selection
    with torch.no_grad():
        output, working_set = render_service.render(model, dataset, args.view_index, method)
    name = dataset.views[args.view_index].name or f"view_{args.view_index:03d}"
    paths = write_render(output, args.out, name)
    return CommandResult(artifacts=paths, message=f"Rendered view {args.view_index} from {working_set.view_ids}")


def eval_command(args: Namespace) -> CommandResult:
    checkpoint = load_checkpoint(args.checkpoint)
    dataset = load_scene(args.data)
    out = Path(args.out)
    metrics = trainer.evaluate(checkpoint, dataset, args.split, out_path=out)
    aggregate = metrics["aggregate"]
    return CommandResult(
        artifacts=[str(out)],
        message=f"psnr_mean={aggregate['psnr_mean']:.3f} ssim_mean={aggregate['ssim_mean']:.4f}",
    )
