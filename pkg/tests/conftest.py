import numpy as np
import pytest

from pnmimo.config import SystemConfig, exponential_pdp

_ACCEPTANCE = []


def small_config(M=4, K=2, L=3, N_D=5, snr_db=10.0, beta=1.0, sp=1e-3, st=2e-3, noise=1.0, mode="sync",
                 decay=0.35):
    return SystemConfig(M=M, K=K, L=L, N_D=N_D, P_D=noise * 10 ** (snr_db / 10), beta=beta,
                        noise_variance=noise, sigma_phi_sq=sp, sigma_theta_sq=st,
                        pdp=np.tile(exponential_pdp(L, decay), (K, 1)), mode=mode)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPTANCE.append((report.nodeid.split("::")[-1], report.outcome,
                            getattr(report, "acceptance_detail", "")))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    detail = item.user_properties and dict(item.user_properties).get("detail")
    if detail:
        rep.acceptance_detail = detail


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, detail in _ACCEPTANCE:
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}" + (f"  [{detail}]" if detail else ""))
