import numpy as np
import pytest

from photoncorr import DetectorParams

# Detector parameters of the reference measurement: low efficiency,
# sizeable dark counts and crosstalk.
PAPER_DET_H = DetectorParams(efficiency=0.012, dark_mean=0.11, crosstalk=0.12)
PAPER_DET_V = DetectorParams(efficiency=0.010, dark_mean=0.14, crosstalk=0.11)
PAPER_MEAN = 4.1

# A higher-efficiency configuration used where parameter recovery is
# exercised: at the reference efficiencies the joint histogram carries
# too little Fisher information to pin the fit at the tested tolerances.
FIT_DET_H = DetectorParams(efficiency=0.70, dark_mean=0.02, crosstalk=0.05)
FIT_DET_V = DetectorParams(efficiency=0.65, dark_mean=0.03, crosstalk=0.04)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
