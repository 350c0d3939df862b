import pytest
import torch

from src.models.neural_mvs import NeuralMVS
from src.models.ray_marcher import weighted_mean_var
from src.models.renderer import BlendNetwork, blend, sample_color_features
from src.types import Camera, CameraIntrinsics, CameraPose, PosEncodingConfig
from src.utils.camera_geom import look_at_pose, pixel_rays, point_at


@pytest.fixture
def source_cameras():
    intrinsics = CameraIntrinsics(8.0, 8.0, 4.0, 4.0, 8, 8)
    identity = CameraPose(torch.eye(3), torch.zeros(3))
    return [
        Camera(intrinsics, identity),
        Camera(intrinsics, look_at_pose((0.5, 0.0, 0.0), target=(0.0, 0.0, 2.0))).to(torch.float32),
        Camera(intrinsics, look_at_pose((0.0, 0.5, 0.0), target=(0.0, 0.0, 2.0))).to(torch.float32),
    ]


class TestSampleColorFeatures:
    def test_pixel_center_returns_pixel_color(self, source_cameras):
        images = torch.rand(3, 3, 8, 8)
        feature_maps = torch.rand(3, 64, 8, 8)
        rays = pixel_rays(source_cameras[0].intrinsics, source_cameras[0].pose, torch.tensor([[3.0, 5.0]]))
        surface = point_at(rays.origins, rays.directions, torch.tensor([2.0]))
        samples = sample_color_features(surface, images, feature_maps, source_cameras)
        assert samples.shape == (3, 1, 67)
        assert torch.allclose(samples[0, 0, :3], images[0, :, 5, 3], atol=1e-5)
        assert torch.allclose(samples[0, 0, 3:], feature_maps[0, :, 5, 3], atol=1e-5)

    def test_point_behind_camera_is_zero(self, source_cameras):
        images = torch.rand(3, 3, 8, 8)
        feature_maps = torch.rand(3, 64, 8, 8)
        samples = sample_color_features(torch.tensor([[0.0, 0.0, -2.0]]), images, feature_maps, source_cameras)
        assert torch.equal(samples[0, 0], torch.zeros(67))

    def test_gradient_wrt_surface_point(self, source_cameras):
        cameras = [c.to(torch.float64) for c in source_cameras]
        torch.manual_seed(0)
        images = torch.rand(3, 3, 8, 8, dtype=torch.float64)
        feature_maps = torch.rand(3, 4, 8, 8, dtype=torch.float64)
        surface = torch.tensor([[0.13, -0.07, 2.1], [-0.21, 0.16, 1.9]], dtype=torch.float64, requires_grad=True)
        assert torch.autograd.gradcheck(
            lambda x: sample_color_features(x, images, feature_maps, cameras), (surface,)
        )


class TestBlend:
    def test_outputs_are_in_unit_range(self):
        torch.manual_seed(0)
        network = BlendNetwork()
        rgb, q = blend(network, torch.randn(3, 5, 6, 67) * 10, torch.tensor([0.2, 0.3, 0.5]))
        assert rgb.shape == (3, 5, 6) and q.shape == (5, 6)
        assert rgb.min() >= 0 and rgb.max() <= 1
        assert q.min() >= 0 and q.max() <= 1

    def test_permutation_invariance(self):
        torch.manual_seed(1)
        network = BlendNetwork().double()
        samples = torch.rand(3, 4, 4, 67, dtype=torch.float64)
        weights = torch.tensor([0.1, 0.3, 0.6], dtype=torch.float64)
        order = [2, 0, 1]
        rgb, q = network(samples, weights)
        rgb_p, q_p = network(samples[order], weights[order])
        assert torch.allclose(rgb, rgb_p, atol=1e-12)
        assert torch.allclose(q, q_p, atol=1e-12)

    def test_identical_samples_have_zero_spread(self):
        torch.manual_seed(2)
        network = BlendNetwork()
        samples = torch.rand(1, 3, 3, 67).expand(3, 3, 3, 67)
        weights = torch.tensor([0.2, 0.3, 0.5])
        mu, var = weighted_mean_var(samples, weights)
        assert torch.allclose(var, torch.zeros_like(var), atol=1e-6)
        context = torch.cat([mu, var], dim=-1).expand(3, 3, 3, 134)
        per_view = network.view_mlp(torch.cat([samples, context], dim=-1))
        assert torch.allclose(per_view[0], per_view[1]) and torch.allclose(per_view[1], per_view[2])

    def test_gradient_wrt_parameters(self):
        torch.manual_seed(3)
        network = BlendNetwork()
        samples = torch.rand(3, 2, 2, 67)
        weights = torch.tensor([0.2, 0.3, 0.5])
        bias = network.color_mlp[-1].bias
        rgb, _ = network(samples, weights)
        rgb.sum().backward()
        analytic = bias.grad[0].item()

        eps = 1e-2
        with torch.no_grad():
            bias[0] += eps
            plus = network(samples, weights)[0].sum().item()
            bias[0] -= 2 * eps
            minus = network(samples, weights)[0].sum().item()
        numeric = (plus - minus) / (2 * eps)
        assert analytic == pytest.approx(numeric, rel=1e-2)


class TestRender:
    def test_same_inputs_render_identically(self, source_cameras):
        torch.manual_seed(4)
        model = NeuralMVS(posenc=PosEncodingConfig(2))
        target = Camera(source_cameras[0].intrinsics, look_at_pose((0.2, 0.2, 0.0), target=(0.0, 0.0, 2.0))).to(
            torch.float32
        )
        images = torch.rand(3, 3, 8, 8)
        first = model(target, images, source_cameras, [0.2, 0.3, 0.5], 1.0, 4.0)
        second = model(target, images, source_cameras, [0.2, 0.3, 0.5], 1.0, 4.0)
        assert torch.equal(first.color, second.color)
        assert torch.equal(first.depth, second.depth)
        assert torch.equal(first.confidence, second.confidence)
