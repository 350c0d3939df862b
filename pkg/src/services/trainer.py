"""
End-to-end optimization, evaluation and checkpointing.
"""
import copy
import json
import logging
import math
from collections.abc import Callable, Iterable
from pathlib import Path

import numpy as np
import torch
from tqdm import tqdm

from ..config import Config, TrainConfig
from ..errors import CheckpointVersionError, RejectedInputError, TrainingAbortedError
from ..models.neural_mvs import NeuralMVS
from ..models.objective import confidence_loss, plain_l1, psnr, ssim
from ..types import Checkpoint, RenderOutput, SceneDataset, TrainResult
from ..utils.constants import ABLATION_VARIANTS, CHECKPOINT_VERSION
from ..utils.decorators import log_timing
from .diagnostics import diagnostics
from .render_service import render_service
from .scene_io import write_render

logger = logging.getLogger("neuralmvs.trainer")

HISTORY_FILE = "history.jsonl"
CHECKPOINT_FILE = "checkpoint.pt"

RenderOverride = Callable[[int], RenderOutput]


def json_float(value: float) -> float | str:
    """Finite floats pass through; infinities become "inf"/"-inf" so the JSON stays standard."""
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def _mean(values: list[float]) -> float:
    return float(np.mean(values)) if values else float("nan")


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "version": checkpoint.version,
            "step": checkpoint.step,
            "config": checkpoint.config,
            "model_state": checkpoint.model_state,
            "optimizer_state": checkpoint.optimizer_state,
        },
        path,
    )
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    data = torch.load(path, map_location="cpu", weights_only=True)
    version = data.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"Checkpoint {path} has version {version!r}, expected {CHECKPOINT_VERSION!r}")
    return Checkpoint(
        model_state=data["model_state"],
        optimizer_state=data.get("optimizer_state"),
        step=int(data["step"]),
        config=data["config"],
        version=version,
    )


def snapshot(model: NeuralMVS, optimizer: torch.optim.Optimizer | None, step: int, cfg: TrainConfig) -> Checkpoint:
    return Checkpoint(
        model_state={k: v.detach().cpu().clone() for k, v in model.state_dict().items()},
        optimizer_state=copy.deepcopy(optimizer.state_dict()) if optimizer is not None else None,
        step=step,
        config=cfg.to_dict(),
        version=CHECKPOINT_VERSION,
    )


class Trainer:
    def __init__(self, device: torch.device | str | None = None):
        self._device = torch.device(device) if device is not None else None

    @property
    def device(self) -> torch.device:
        # Resolved on first use
        if self._device is None:
            self._device = Config.device()
        return self._device

    def build_model(self, cfg: TrainConfig) -> NeuralMVS:
        torch.manual_seed(cfg.seed)
        return NeuralMVS.from_config(cfg).to(self.device)

    def model_from_checkpoint(self, checkpoint: Checkpoint) -> NeuralMVS:
        if checkpoint.version != CHECKPOINT_VERSION:
            raise CheckpointVersionError(
                f"Checkpoint version {checkpoint.version!r}, expected {CHECKPOINT_VERSION!r}"
            )
        cfg = TrainConfig.from_dict(checkpoint.config)
        model = NeuralMVS.from_config(cfg)
        model.load_state_dict(checkpoint.model_state)
        return model.to(self.device)

    def _loss(self, cfg: TrainConfig, target: torch.Tensor, output: RenderOutput) -> torch.Tensor:
        if cfg.toggles.use_confidence_loss:
            return confidence_loss(target, output.color, output.confidence, cfg.loss_config)
        return plain_l1(target, output.color)

    def _abort(self, step: int, view_index: int, working_set, loss: float, out_dir: Path | None):
        error = TrainingAbortedError(f"Non-finite loss {loss} at step {step}", step=step)
        context = {
            "step": step,
            "target_view": view_index,
            "working_set": list(working_set.view_ids),
            "weights": list(working_set.weights),
            "loss": repr(loss),
        }
        dump = diagnostics.log_error(error, context, directory=out_dir)
        error.dump_path = str(dump) if dump is not None else None
        raise error

    def _optimize(
        self,
        model: NeuralMVS,
        optimizer: torch.optim.Optimizer,
        dataset: SceneDataset,
        cfg: TrainConfig,
        start_step: int,
        out_dir: Path | None,
    ) -> TrainResult:
        train_ids = dataset.train_ids
        if len(train_ids) < 4:
            raise RejectedInputError(f"Training needs at least 4 train views, got {len(train_ids)}")

        rng = np.random.default_rng(cfg.seed)
        history = []
        history_file = None
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            history_file = open(out_dir / HISTORY_FILE, "a")

        method = cfg.toggles.view_selection
        model.train()
        try:
            for step in tqdm(range(start_step + 1, start_step + cfg.steps + 1), desc="train", leave=False):
                view_index = int(train_ids[rng.integers(len(train_ids))])
                output, working_set = render_service.render(model, dataset, view_index, method)
                target = dataset.views[view_index].image.to(device=output.color.device, dtype=output.color.dtype)
                loss = self._loss(cfg, target, output)
                loss_value = loss.item()
                if not math.isfinite(loss_value):
                    self._abort(step, view_index, working_set, loss_value, out_dir)

                optimizer.zero_grad()
                loss.backward()
                optimizer.step()

                record = {"step": step, "loss": loss_value, "psnr": psnr(target, output.color.detach())}
                history.append(record)
                if history_file is not None:
                    history_file.write(json.dumps({**record, "psnr": json_float(record["psnr"])}) + "\n")
                if cfg.log_every and step % cfg.log_every == 0:
                    logger.info(f"Step {step}: loss={loss_value:.5f} psnr={record['psnr']:.2f}")

                if out_dir is not None and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
                    save_checkpoint(snapshot(model, optimizer, step, cfg), out_dir / f"checkpoint_{step:06d}.pt")
                if cfg.eval_every and step % cfg.eval_every == 0 and dataset.test_ids:
                    summary = self._evaluate_model(model, dataset, "test", cfg)["aggregate"]
                    history.append({"step": step, "split": "test", **summary})
                    logger.info(f"Step {step}: test psnr_mean={summary['psnr_mean']:.2f}")
                    model.train()
        finally:
            if history_file is not None:
                history_file.close()

        checkpoint = snapshot(model, optimizer, start_step + cfg.steps, cfg)
        if out_dir is not None:
            path = save_checkpoint(checkpoint, out_dir / CHECKPOINT_FILE)
            logger.info(f"Saved checkpoint at step {checkpoint.step} to {path}")
        return TrainResult(checkpoint=checkpoint, history=history)

    @log_timing("train", level=logging.INFO)
    def train(self, dataset: SceneDataset, cfg: TrainConfig, out_dir: str | Path | None = None) -> TrainResult:
        """Optimize a freshly initialised model on the train split of `dataset`."""
        cfg.validate()
        model = self.build_model(cfg)
        optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
        logger.info(f"Training {cfg.steps} steps on {len(dataset.train_ids)} views (seed {cfg.seed})")
        return self._optimize(model, optimizer, dataset, cfg, 0, Path(out_dir) if out_dir else None)

    @log_timing("finetune", level=logging.INFO)
    def finetune(
        self,
        checkpoint: Checkpoint,
        dataset: SceneDataset,
        cfg: TrainConfig | None = None,
        out_dir: str | Path | None = None,
    ) -> TrainResult:
        """
        Continue optimization from `checkpoint` on `dataset`.

        The architecture comes from the checkpoint's config; `cfg` (default:
        the checkpoint's config) controls the optimization. Architecture
        fields of `cfg` that disagree with the checkpoint are replaced, so the
        saved config always describes the saved weights. The optimizer state
        is restored when the checkpoint carries one.
        """
        model = self.model_from_checkpoint(checkpoint)
        cfg = cfg or TrainConfig.from_dict(checkpoint.config)
        cfg.validate()
        cfg, changed = cfg.with_architecture_of(checkpoint.config)
        if changed:
            logger.warning(f"Fine-tuning keeps the checkpoint architecture; ignoring config fields {changed}")
        optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
        if checkpoint.optimizer_state is not None:
            optimizer.load_state_dict(checkpoint.optimizer_state)
            for group in optimizer.param_groups:
                group["lr"] = cfg.learning_rate
        torch.manual_seed(cfg.seed)
        logger.info(f"Fine-tuning from step {checkpoint.step} for {cfg.steps} steps")
        return self._optimize(model, optimizer, dataset, cfg, checkpoint.step, Path(out_dir) if out_dir else None)

    @torch.no_grad()
    def _evaluate_model(
        self,
        model: NeuralMVS | None,
        dataset: SceneDataset,
        split: str,
        cfg: TrainConfig,
        render_dir: Path | None = None,
        render_fn: RenderOverride | None = None,
    ) -> dict:
        ids = dataset.splits.get(split, ())
        if not ids:
            raise RejectedInputError(f"Split '{split}' is empty")
        if model is not None:
            model.eval()

        per_view = []
        for view_index in ids:
            if render_fn is not None:
                output = render_fn(view_index)
            else:
                output, _ = render_service.render(model, dataset, view_index, cfg.toggles.view_selection)
            target = dataset.views[view_index].image.to(device=output.color.device, dtype=output.color.dtype)
            record = {
                "view": int(view_index),
                "name": dataset.views[view_index].name,
                "psnr": psnr(target, output.color),
                "ssim": ssim(target, output.color),
                "loss": confidence_loss(target, output.color, output.confidence, cfg.loss_config).item(),
            }
            per_view.append(record)
            if render_dir is not None:
                write_render(output, render_dir, dataset.views[view_index].name or f"view_{view_index:03d}")

        aggregate = {
            "psnr_mean": _mean([r["psnr"] for r in per_view]),
            "ssim_mean": _mean([r["ssim"] for r in per_view]),
            "loss_mean": _mean([r["loss"] for r in per_view]),
        }
        return {"split": split, "views": per_view, "aggregate": aggregate}

    def evaluate(
        self,
        checkpoint: Checkpoint | None,
        dataset: SceneDataset,
        split: str = "test",
        out_path: str | Path | None = None,
        render_dir: str | Path | None = None,
        render_fn: RenderOverride | None = None,
    ) -> dict:
        """
        Metrics for every view of `split`, rendered from train views only.

        Args:
            checkpoint: Model to evaluate; may be None when `render_fn` is given.
            dataset: Scene to evaluate on.
            split: "train" or "test".
            out_path: Optional metrics JSON path.
            render_dir: Optional directory for per-view render artifacts.
            render_fn: Replaces the model render, mapping a view index to a RenderOutput.
        """
        if checkpoint is None and render_fn is None:
            raise RejectedInputError("evaluate needs a checkpoint or a render override")
        model = self.model_from_checkpoint(checkpoint) if checkpoint is not None else None
        cfg = TrainConfig.from_dict(checkpoint.config) if checkpoint is not None else TrainConfig()
        metrics = self._evaluate_model(
            model, dataset, split, cfg, Path(render_dir) if render_dir else None, render_fn
        )
        aggregate = metrics["aggregate"]
        logger.info(
            f"Evaluated {len(metrics['views'])} {split} views: "
            f"psnr_mean={aggregate['psnr_mean']:.3f} ssim_mean={aggregate['ssim_mean']:.4f}"
        )
        if out_path is not None:
            write_metrics(metrics, out_path)
        return metrics

    def run_ablation(
        self,
        dataset: SceneDataset,
        cfg: TrainConfig,
        out_dir: str | Path | None = None,
        seeds: Iterable[int] | None = None,
        variants: dict[str, dict] = ABLATION_VARIANTS,
    ) -> dict:
        """
        Train and evaluate every ablation variant per seed; rows keyed by variant name.

        Seeds default to the config's `ablation_seeds`, then to its single `seed`.
        """
        if seeds is None:
            seeds = cfg.ablation_seeds or [cfg.seed]
        seeds = list(seeds)
        out_dir = Path(out_dir) if out_dir is not None else None
        rows = {}
        for name, overrides in variants.items():
            runs = []
            for seed in seeds:
                variant_cfg = cfg.with_overrides({**overrides, "seed": seed})
                run_dir = out_dir / name / f"seed_{seed}" if out_dir is not None else None
                logger.info(f"Ablation '{name}' seed {seed}")
                result = self.train(dataset, variant_cfg, run_dir)
                summary = self.evaluate(result.checkpoint, dataset, "test")["aggregate"]
                runs.append({"seed": seed, **summary})
            rows[name] = {
                "psnr_mean": _mean([r["psnr_mean"] for r in runs]),
                "ssim_mean": _mean([r["ssim_mean"] for r in runs]),
                "runs": runs,
            }
        if out_dir is not None:
            write_metrics(rows, out_dir / "ablation.json")
        return rows


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_jsonable(v) for v in value]
    if isinstance(value, float):
        return json_float(value)
    return value


def write_metrics(metrics: dict, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(metrics), indent=2))
    return path


trainer = Trainer()
