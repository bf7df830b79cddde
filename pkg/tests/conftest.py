import pytest

from vppsched import benders as bd
from vppsched import instance
from vppsched import scenarios as sg
from vppsched import stochastic as st


@pytest.fixture(scope="session")
def desk():
    return instance.desk_instance()


@pytest.fixture(scope="session")
def desk_scenarios(desk):
    return sg.build_scenarios(desk.forecast, sg.DEFAULT_ERROR_SPECS, 10, seed=42)


@pytest.fixture(scope="session")
def desk_neutral(desk, desk_scenarios):
    """Solved extensive form, expectation risk; reused across read-only tests."""
    risk = st.RiskMeasure(st.EXPECTATION)
    ef = st.build_extensive(desk.model, desk_scenarios, risk)
    sol = st.solve_extensive(desk.model, ef, desk_scenarios)
    return ef, sol


@pytest.fixture(scope="session")
def desk_cvar(desk, desk_scenarios):
    risk = st.RiskMeasure(st.CVAR, 0.9)
    ef = st.build_extensive(desk.model, desk_scenarios, risk)
    sol = st.solve_extensive(desk.model, ef, desk_scenarios)
    return ef, sol


@pytest.fixture(scope="session")
def desk_benders(desk, desk_scenarios):
    return bd.iterate(desk.model, desk_scenarios, st.RiskMeasure(st.EXPECTATION))
