import dataclasses

import numpy as np
import pytest

from bridgealign import pipeline
from bridgealign.config import RunConfig

# Pinned from the one-off calibration run of the default config (seed 7, 50 epochs).
# Acceptance gates use fixed thresholds; these record what the run achieved.
CALIBRATION = {
    "loss_ratio": 0.34194122848759856,
    "bridge_center_accuracy": 0.97625,
    "frame_ensemble_accuracy": 0.9175,
    "bridge_center_entropy": 0.6234288556615923,
    "frame_ensemble_entropy": 0.9853021783345686,
    "untrained_bridge_center_accuracy": 0.045,
    "untrained_frame_ensemble_accuracy": 0.03375,
}


@dataclasses.dataclass
class DefaultRun:
    cfg: RunConfig
    data: pipeline.SimData
    projector: object
    history: list
    trained: dict
    untrained: dict
    seconds: float


@pytest.fixture(scope="session")
def default_run() -> DefaultRun:
    import time

    start = time.perf_counter()
    cfg = RunConfig()
    data = pipeline.simulate(cfg)
    projector, history = pipeline.train(cfg, data)
    trained = pipeline.recognition_metrics(data.heldout, data.bank, projector, cfg.eval.temperature)
    untrained = pipeline.recognition_metrics(data.heldout, data.bank, pipeline.initial_projector(cfg),
                                             cfg.eval.temperature)
    return DefaultRun(cfg, data, projector, history, trained, untrained, time.perf_counter() - start)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
