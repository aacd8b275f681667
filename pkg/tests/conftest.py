import numpy as np
import pytest

from emschart.embedding import TsneParams
from emschart.pipeline import PipelineParams
from emschart.scene import AntennaArray, EmsPanel, Scene, orthonormal_basis

LAM = 0.01  # 30 GHz


@pytest.fixture(scope="session")
def mini_scene():
    """Tiny fully-LoS scene with two panels: fast enough for search tests."""
    bs = np.array([0.0, 0.0, 2.0])
    xs = np.arange(6.0, 12.0)
    points = [[x, y, 1.5] for y in (-1.0, 1.0) for x in xs]
    panels = (
        EmsPanel.build([10.0, 4.0, 2.0], [-0.5, -0.8660254, 0.0], rows=2, cols=12, spacing=LAM / 4),
        EmsPanel.build([10.0, -4.0, 2.0], [-0.5, 0.8660254, 0.0], rows=2, cols=12, spacing=LAM / 4),
    )
    return Scene(
        wavelength=LAM,
        bs_position=bs,
        bs_array=AntennaArray.planar(bs, [1, 0, 0], rows=2, cols=2, spacing=LAM / 2),
        bs_basis=orthonormal_basis([1, 0, 0]),
        panels=panels,
        blockers=(),
        test_points=np.array(points),
        tx_power=0.2,
        noise_power=10 ** ((-92.0 - 30.0) / 10.0),
    )


@pytest.fixture(scope="session")
def mini_params():
    return PipelineParams(
        tsne=TsneParams(perplexity=4.0, iterations=30),
        snapshots=4,
        supervision=0.25,
        kappa=3,
        alphas=(0.5, 0.9, 0.95),
    )
