import os

import hypothesis
import numpy as np
import pytest

np.seterr(all="warn", under="ignore")

hypothesis.settings.register_profile("default", deadline=None, max_examples=50)
hypothesis.settings.register_profile("fast", deadline=None, max_examples=10)
hypothesis.settings.register_profile("thorough", deadline=None, max_examples=500)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def sounding_cfg():
    from subthz.sounding import SoundingConfig

    return SoundingConfig()


@pytest.fixture(scope="session")
def tx_frame(sounding_cfg):
    from subthz.sounding import build_tx_frame

    return build_tx_frame(sounding_cfg)


@pytest.fixture(scope="session")
def acceptance(request):
    """Collects (number, title, passed, detail) rows for the end-of-run summary."""
    rows = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, title, passed, detail=""):
        rows.append((number, title, bool(passed), detail))
        print(f"[{number}] {'PASS' if passed else 'FAIL'} {title}: {detail}")
        return passed

    return record


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = config.stash.get(_ACCEPTANCE, [])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(rows, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{number}] {'PASS' if passed else 'FAIL'} {title}: {detail}")
