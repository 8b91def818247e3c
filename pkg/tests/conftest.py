import logging

import pytest


@pytest.fixture(autouse=True)
def quiet_logs():
    # small-n and adversarial instances hit the documented fallbacks on
    # purpose; don't let thousands of expected warnings swamp the captured
    # output. Tests that assert on a warning re-enable it via caplog.
    logger = logging.getLogger("lcpms")
    old = logger.level
    logger.setLevel(logging.ERROR)
    yield
    logger.setLevel(old)
