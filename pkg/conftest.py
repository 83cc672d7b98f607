import os

import pytest

# Keep the run environment deterministic for testing
os.environ["SKEWWALK_LOG_LEVEL"] = "WARNING"
os.environ.pop("SKEWWALK_WORKERS", None)
os.environ.pop("SKEWWALK_OUTPUT_DIR", None)


@pytest.fixture
def xi_law():
    """The lattice stable step law at alpha = 1.5 with C = 1/4."""
    from skewwalk.distributions import LatticeStableLaw

    return LatticeStableLaw(alpha=1.5)


@pytest.fixture
def simple_law():
    """The simple +-1 walk."""
    from skewwalk.distributions import simple_walk

    return simple_walk()


@pytest.fixture
def skew_eta():
    """One-sided zeta perturbation with beta = 0.3 < alpha - 1."""
    from skewwalk.distributions import PerturbationLaw

    return PerturbationLaw(mode="one_sided", beta=0.3)


@pytest.fixture
def heavy_eta():
    """Two-sided zeta perturbation with beta = 0.9 > alpha - 1."""
    from skewwalk.distributions import PerturbationLaw

    return PerturbationLaw(mode="two_sided", beta=0.9, c_plus=0.5)


@pytest.fixture
def geometric_eta():
    from skewwalk.distributions import PerturbationLaw

    return PerturbationLaw(mode="geometric", geometric_p=0.5, c_plus=0.5)


@pytest.fixture
def output_dir(tmp_path):
    """A fresh artifact folder."""
    path = tmp_path / "results"
    return str(path)
