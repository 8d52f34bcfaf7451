import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rkhs_diffusion import KernelSpec, sample_iid  # noqa: E402
from rkhs_diffusion.estimator import EstimatorConfig, fit_dataset  # noqa: E402
from rkhs_diffusion.sampling import StandardGaussian  # noqa: E402


@pytest.fixture(scope="session")
def ou_data_200():
    return sample_iid(StandardGaussian(1), 200, seed=11)


@pytest.fixture(scope="session")
def ou_model_200(ou_data_200):
    return fit_dataset(ou_data_200, EstimatorConfig(lam=1e-3, p=200), KernelSpec(1.0, 1))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[number][1])
