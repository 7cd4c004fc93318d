import os
import sys
from importlib import resources

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from causaltest.dag import read_dot  # noqa: E402


def fixture_path(name: str) -> str:
    return str(resources.files("causaltest").joinpath("fixtures", name))


@pytest.fixture
def infection_dag():
    return read_dot(fixture_path("infection.dot"))


@pytest.fixture
def plt_dag():
    return read_dot(fixture_path("plt.dot"))


@pytest.fixture
def fig3_dag():
    return read_dot(fixture_path("fig3.dot"))


PLT_RANGES = {"W": (0.0, 10.0), "H": (0.0, 10.0), "I": (0.0, 16.0)}


def plt_scenario():
    from causaltest.scenario import ModellingScenario

    roles = {"W": "input", "H": "input", "I": "input",
             "L_t": "output", "P_t": "output", "L_u": "output", "P_u": "output"}
    return ModellingScenario({k: {"role": r} for k, r in roles.items()})


def plt_lhs_table(n=1000, seed=0):
    from causaltest.plt import PLT_COLUMNS, lhs_configs, run_plt
    from causaltest.scenario import DataTable

    rows = [run_plt(c).as_row() for c in lhs_configs(n, PLT_RANGES, seed)]
    return DataTable.from_rows(rows, columns=list(PLT_COLUMNS))


@pytest.fixture(scope="session")
def plt_lhs():
    return plt_lhs_table()


@pytest.fixture
def plt_spec(plt_dag):
    from causaltest.scenario import CausalSpecification

    return CausalSpecification(plt_scenario(), plt_dag)
