import json

import numpy as np
import pytest

from flexopt import RunConfig, VariantConfig, run

_CRITERIA: dict[str, tuple[bool, str]] = {}


def record_criterion(cid: str, passed: bool, detail: str) -> None:
    _CRITERIA[cid] = (bool(passed), detail)
    print(f"{cid} {'PASS' if passed else 'FAIL'}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_CRITERIA, key=lambda c: int(c[1:])):
        passed, detail = _CRITERIA[cid]
        terminalreporter.write_line(f"{cid} {'PASS' if passed else 'FAIL'}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# Full-size runs shared by the acceptance suite and the slow property tests.

@pytest.fixture(scope="session")
def runs_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("runs")


@pytest.fixture(scope="session")
def base_txty(runs_dir):
    return run(RunConfig(nelx=100, nely=100, doc=["tx"], dof=["ty"], emax=[1.2],
                         out=str(runs_dir / "txty")))


@pytest.fixture(scope="session")
def base_tytx():
    return run(RunConfig(nelx=100, nely=100, doc=["ty"], dof=["tx"], emax=[0.5]))


@pytest.fixture(scope="session")
def base_tyrz():
    return run(RunConfig(nelx=100, nely=100, doc=["ty"], dof=["rz"], emax=[0.5]))


@pytest.fixture(scope="session")
def robust_txty(runs_dir):
    variant = VariantConfig(mode="robust", eta=0.5, deta=0.2, radius=4.0, reference_field="nominal")
    return run(RunConfig(nelx=100, nely=100, doc=["tx"], dof=["ty"], emax=[1.2], variant=variant,
                         out=str(runs_dir / "robust")))


@pytest.fixture(scope="session")
def stress_txty(base_txty, runs_dir):
    report = runs_dir / "txty" / "report.json"
    assert json.loads(report.read_text())["max_stress"]
    variant = VariantConfig(mode="stress", sigma_reference=str(report), sigma_bar_fraction=0.4)
    return run(RunConfig(nelx=100, nely=100, doc=["tx"], dof=["ty"], emax=[1.2], variant=variant,
                         out=str(runs_dir / "stress")))
