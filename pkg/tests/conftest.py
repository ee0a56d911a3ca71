import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    criterion = getattr(item.function, "_criterion", None)
    if rep.when == "call" and criterion is not None:
        lines = getattr(item.config, "_acceptance_lines", None)
        if lines is None:
            lines = item.config._acceptance_lines = []
        lines.append((criterion, rep.passed))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for criterion, passed in sorted(set(lines)):
            terminalreporter.write_line(
                f"{'PASS' if passed else 'FAIL'}  {criterion}")

from palsyfuse import geometry, rasterizer, synthgen
from palsyfuse.datamodel import LandmarkFrame, Source


@pytest.fixture(scope="session")
def roles():
    return geometry.default_role_map()


@pytest.fixture(scope="session")
def contours():
    return rasterizer.default_contours()


@pytest.fixture(scope="session")
def template_frame():
    """The neutral, exactly mirror-symmetric synthetic face."""
    return LandmarkFrame("tpl", "f0000", Source.SYNTHETIC, synthgen.neutral_template())


def make_frame(landmarks, subject="s", frame="f0000", blendshapes=None, label=None):
    return LandmarkFrame(subject, frame, Source.SYNTHETIC,
                         np.asarray(landmarks, dtype=np.float64),
                         blendshapes=blendshapes, label=label)
