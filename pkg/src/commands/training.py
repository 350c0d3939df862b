import logging
from argparse import Namespace
from pathlib import Path

from ..config import TrainConfig
from ..services.scene_io import load_scene
from ..services.trainer import CHECKPOINT_FILE, HISTORY_FILE, load_checkpoint, trainer
from ..types import CommandResult

logger = logging.getLogger("neuralmvs.commands.training")


def train_command(args: Namespace) -> CommandResult:
    cfg = TrainConfig.load(args.config)
    dataset = load_scene(args.data)
    out = Path(args.out)
    if args.resume:
        result = trainer.finetune(load_checkpoint(args.resume), dataset, cfg, out)
    else:
        result = trainer.train(dataset, cfg, out)
    final = next((r for r in reversed(result.history) if "loss" in r), None)
    summary = f", final loss {final['loss']:.5f}" if final else ""
    return CommandResult(
        artifacts=[str(out / CHECKPOINT_FILE), str(out / HISTORY_FILE)],
        message=f"Trained to step {result.checkpoint.step}{summary}",
    )


def ablate_command(args: Namespace) -> CommandResult:
    cfg = TrainConfig.load(args.config)
    dataset = load_scene(args.data)
    out = Path(args.out)
    rows = trainer.run_ablation(dataset, cfg, out)
    lines = [f"{name}: psnr {row['psnr_mean']:.3f}" for name, row in rows.items()]
    return CommandResult(artifacts=[str(out / "ablation.json")], message="\n".join(lines))
