from pathlib import Path

import pytest

from tsdetect import formats
from tsdetect.synth import SynthConfig, corrupt_candidates, generate_ground_truth

DATA = Path(__file__).parent / "data"

# The frozen discrepancy fixture: score rank carries no localization signal.
RHO0_CFG = SynthConfig(n_frames=500, rho=0.0, seed=7, candidates_per_frame=8)


@pytest.fixture(scope="session")
def rho0_files(tmp_path_factory):
    """Ground-truth and candidate files for the frozen rho=0 benchmark."""
    tmp = tmp_path_factory.mktemp("rho0")
    gt = generate_ground_truth(RHO0_CFG)
    cands = corrupt_candidates(gt, RHO0_CFG)
    gt_path = tmp / "gt.txt"
    cand_path = tmp / "cand.txt"
    formats.write_ground_truth(gt, str(gt_path))
    formats.write_detections(cands, str(cand_path))
    return gt_path, cand_path


@pytest.fixture(scope="session")
def golden_config() -> Path:
    return DATA / "golden_synth.ini"
