import numpy as np
import pytest
from hypothesis import settings

from kinetic_fp.grid import PhaseField, build_torus_grid, build_velocity_grid

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def make_field(func, n_x=16, n_v=33, V=8.0, rep="h"):
    return PhaseField.from_function(func, build_torus_grid(n_x), build_velocity_grid(V, n_v), rep)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """Print the one-line verdict recorded by each acceptance criterion."""
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if getattr(rep, "when", None) != "call":
                continue
            lines.extend(v for k, v in rep.user_properties if k == "acceptance")
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split()[0])):
            terminalreporter.write_line(line)
