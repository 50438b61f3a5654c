"""Shared fixtures and helpers, plus the acceptance summary printer."""

from __future__ import annotations

import numpy as np
import pytest

from rgbabench import RgbImage, RgbaImage, SignedImage


def random_rgba(rng: np.random.Generator, h: int, w: int) -> RgbaImage:
    return RgbaImage(rng.random((3, h, w)), rng.random((h, w)))


def random_rgb(rng: np.random.Generator, h: int, w: int) -> RgbImage:
    return RgbImage(rng.random((3, h, w)))


def random_signed(rng: np.random.Generator, h: int, w: int) -> SignedImage:
    return SignedImage(rng.uniform(-1.0, 1.0, (3, h, w)), rng.random((h, w)))


def constant_rgba(value: float, alpha: float, h: int = 4, w: int = 4) -> RgbaImage:
    return RgbaImage(np.full((3, h, w), value), np.full((h, w), alpha))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20250823)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    try:
        from tests import acceptance_log
    except ImportError:
        import acceptance_log  # run from inside tests/
    if not acceptance_log.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in acceptance_log.RESULTS:
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        line = "%s: %s" % (status, name)
        if detail:
            line += " (%s)" % detail
        terminalreporter.write_line(line)
