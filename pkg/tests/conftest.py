import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("mcvl", max_examples=60, deadline=None)
settings.load_profile("mcvl")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


SMALL_SCENARIO = dict(extent=150.0, grid=2, image_width=64, image_height=48)


@pytest.fixture(scope="session")
def small_map():
    """A tiny rendered scenario with a trained codebook (K=16, p<=32) and its database."""
    from mcvl import pipeline, simworld
    from mcvl.config import Config

    scfg = simworld.ScenarioConfig(**SMALL_SCENARIO)
    sc = simworld.make_scenario(scfg)
    images, poses = [], []
    for tr in sc.training:
        images += simworld.render_traversal(tr, sc.world_seed, sc.camera)
        poses += tr.poses
    cfg = Config(vocab_size=16, pca_dims=32, widths=(16, 24), vocab_samples_per_image=50)
    cb, raws = pipeline.train(images, cfg)
    db = pipeline.build_database(cb, poses, raws=raws, seq_names=[t.name for t in sc.training])
    return dict(scenario=sc, config=cfg, codebook=cb, database=db, images=images, raws=raws)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
