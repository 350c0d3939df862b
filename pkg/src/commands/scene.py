import json
import logging
from argparse import Namespace
from pathlib import Path

from ..errors import RejectedInputError
from ..services.render_service import render_service
from ..services.scene_io import generate_toy_scene, load_scene
from ..services.view_select import view_selector
from ..types import CommandResult, ToySceneSpec
from ..utils.constants import ViewConfiguration

logger = logging.getLogger("neuralmvs.commands.scene")


def parse_resolution(value: str) -> tuple[int, int]:
    try:
        width, height = (int(part) for part in value.lower().split("x"))
    except ValueError:
        raise RejectedInputError(f"Resolution must look like WxH, got {value!r}")
    return width, height


def make_toy_command(args: Namespace) -> CommandResult:
    spec = ToySceneSpec(
        primitive=args.scene,
        cell_size=args.cell_size,
        num_views=args.views,
        configuration=ViewConfiguration(args.config),
        resolution=parse_resolution(args.res),
        seed=args.seed,
    )
    dataset, _ = generate_toy_scene(spec, args.out)
    out = Path(args.out)
    artifacts = sorted(str(p) for p in out.rglob("*") if p.is_file())
    return CommandResult(artifacts=artifacts, message=f"Wrote {len(dataset.views)} views to {out}")


def select_views_command(args: Namespace) -> CommandResult:
    dataset = load_scene(args.data)
    if not 0 <= args.target_index < len(dataset.views):
        raise RejectedInputError(f"Target index {args.target_index} out of range [0, {len(dataset.views)})")
    target = dataset.views[args.target_index].camera
    working_set = render_service.working_set(dataset, target, exclude=args.target_index)
    ids = render_service.source_ids(dataset, exclude=args.target_index)
    constellation = view_selector.constellation(dataset.centers(ids), ids)

    payload = {
        "configuration": constellation.configuration.value,
        "view_ids": list(constellation.view_ids),
        "projected": constellation.projected.tolist(),
        "triangles": constellation.triangles.tolist(),
        "selected": {"view_ids": list(working_set.view_ids), "weights": list(working_set.weights)},
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(payload, indent=2))
    return CommandResult(
        artifacts=[str(out)],
        message=f"Working set {working_set.view_ids} with weights {tuple(round(w, 4) for w in working_set.weights)}",
    )
