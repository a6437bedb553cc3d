import pytest

from conv_commsynth import (ConvProblem, MachineSpec, brute_force_oracle,
                            synthesize)

# The layer used as the running end-to-end fixture everywhere below.
PROBLEM_A = ConvProblem(n_b=2, n_k=8, n_c=8, n_h=8, n_w=8, n_r=3, n_s=3)
MACHINE_A = MachineSpec(p=4, m=256, m_d=4096)


@pytest.fixture(scope="session")
def problem_a():
    return PROBLEM_A


@pytest.fixture(scope="session")
def machine_a():
    return MACHINE_A


@pytest.fixture(scope="session")
def oracle_a():
    return brute_force_oracle(PROBLEM_A, MACHINE_A)


@pytest.fixture(scope="session")
def pipeline_a():
    return synthesize(PROBLEM_A, MACHINE_A, for_simulation=True)
