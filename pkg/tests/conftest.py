import numpy as np
import pytest

from spinmap.propagator import HilbertSpaceSpec, build_hamiltonian, run_basis_trajectories
from spinmap.spectral import DiscretizedBath, OhmicDensity, discretize

# reference instance: 4 Ohmic modes, cutoff 6, alpha = 0.2, omega_c = 5 Delta
REF_DELTA = 1.0
REF_DT = 0.05
REF_STEPS = 400
REF_STRIDE = 4


@pytest.fixture(scope="session")
def ref_bath():
    return discretize(OhmicDensity(0.2, 5.0), 4)


@pytest.fixture(scope="session")
def ref_spec(ref_bath):
    return HilbertSpaceSpec.uniform(ref_bath, 6)


@pytest.fixture(scope="session")
def ref_hamiltonian(ref_bath, ref_spec):
    return build_hamiltonian(ref_bath, REF_DELTA, ref_spec)


@pytest.fixture(scope="session")
def ref_basis(ref_bath, ref_spec, ref_hamiltonian):
    return run_basis_trajectories(ref_bath, REF_DELTA, ref_spec, REF_DT, REF_STEPS,
                                  REF_STRIDE, h=ref_hamiltonian)


@pytest.fixture(scope="session")
def free_spin():
    """A single decoupled mode: the spin evolves under Delta sigma_x only."""
    bath = DiscretizedBath.single_mode(1.0, 0.0)
    spec = HilbertSpaceSpec.uniform(bath, 2)
    return bath, spec, build_hamiltonian(bath, REF_DELTA, spec)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
