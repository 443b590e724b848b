import dataclasses
import functools
import time

import pytest
from hypothesis import HealthCheck, settings

from thermosyphon.config import build_setup, preset_config
from thermosyphon.coupling import run_staggered

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# (criterion, passed, detail) lines collected by the acceptance tests
ACCEPTANCE_LINES: list[tuple[str, bool, str]] = []


def record(criterion: str, passed: bool, detail: str = "") -> bool:
    ACCEPTANCE_LINES.append((criterion, bool(passed), detail))
    print(f"{'PASS' if passed else 'FAIL'}  {criterion}  {detail}")
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {crit}  {detail}")


@functools.lru_cache(maxsize=None)
def coupled_run(preset: str, G_tot: float | None = None, gravity: tuple | None = None):
    """Converged (setup, state, seconds) for a preset; cached across test modules."""
    cfg = preset_config(preset)
    if G_tot is not None:
        cfg = dataclasses.replace(cfg, coolant=dataclasses.replace(cfg.coolant, G_tot=G_tot))
    if gravity is not None:
        cfg = dataclasses.replace(cfg, gravity=gravity)
    setup = build_setup(cfg)
    t0 = time.perf_counter()
    state = run_staggered(setup, cfg.coupling)
    return setup, state, time.perf_counter() - t0


@pytest.fixture(scope="session")
def deviceA_run():
    return coupled_run("deviceA")
