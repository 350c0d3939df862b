"""
Single-pass rendering of dataset views with the full model.
"""
import logging

import torch

from ..errors import RejectedInputError
from ..models.neural_mvs import NeuralMVS
from ..types import Camera, RenderOutput, SceneDataset, WorkingSet
from ..utils.constants import ViewSelection
from .view_select import ViewSelector, view_selector

logger = logging.getLogger("neuralmvs.render")


def _model_dtype_device(model: NeuralMVS) -> tuple[torch.dtype, torch.device]:
    parameter = next(model.parameters())
    return parameter.dtype, parameter.device


class RenderService:
    def __init__(self, selector: ViewSelector = view_selector):
        self.selector = selector

    def source_ids(self, dataset: SceneDataset, exclude: int | None = None) -> tuple[int, ...]:
        ids = tuple(i for i in dataset.train_ids if i != exclude)
        if len(ids) < 3:
            raise RejectedInputError(f"Need at least 3 source views, got {len(ids)}")
        return ids

    def working_set(
        self,
        dataset: SceneDataset,
        target: Camera,
        method: str = ViewSelection.DELAUNAY.value,
        exclude: int | None = None,
    ) -> WorkingSet:
        """Working set for `target` among the train views, optionally excluding one view id."""
        ids = self.source_ids(dataset, exclude)
        target_center = target.pose.center.detach().cpu().double().numpy()
        return self.selector.select(dataset.centers(ids), ids, target_center, method)

    def render_pose(
        self,
        model: NeuralMVS,
        dataset: SceneDataset,
        target: Camera,
        working_set: WorkingSet,
    ) -> RenderOutput:
        """One forward pass of `model` for the full target image."""
        dtype, device = _model_dtype_device(model)
        cameras = [dataset.views[i].camera.to(dtype, device) for i in working_set.view_ids]
        images = torch.stack([dataset.views[i].image for i in working_set.view_ids]).to(device=device, dtype=dtype)
        center = torch.tensor(dataset.center, dtype=dtype, device=device)
        return model(
            target.to(dtype, device),
            images,
            cameras,
            working_set.weights,
            dataset.near,
            dataset.far,
            center=center,
            scale=dataset.scale,
        )

    def render(
        self,
        model: NeuralMVS,
        dataset: SceneDataset,
        view_index: int,
        method: str = ViewSelection.DELAUNAY.value,
    ) -> tuple[RenderOutput, WorkingSet]:
        """Render dataset view `view_index` from the other train views."""
        if not 0 <= view_index < len(dataset.views):
            raise RejectedInputError(f"View index {view_index} out of range [0, {len(dataset.views)})")
        target = dataset.views[view_index].camera
        working_set = self.working_set(dataset, target, method, exclude=view_index)
        logger.debug(f"View {view_index}: working set {working_set.view_ids} weights {working_set.weights}")
        return self.render_pose(model, dataset, target, working_set), working_set


render_service = RenderService()
