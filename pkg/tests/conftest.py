"""Shared fixtures: one calibration and one report table for the session."""

import time

import pytest

from oxpix.calibration import calibrate
from oxpix.experiments import ReadableWindow, table1_report


@pytest.fixture(scope="session")
def calibrated():
    result = calibrate(seed=0, restarts=8)
    assert result.converged, f"calibration failed: {result.residuals}"
    return result


@pytest.fixture(scope="session")
def window():
    return ReadableWindow()


@pytest.fixture(scope="session")
def reports(calibrated, window):
    t0 = time.monotonic()
    table = table1_report(calibrated.oxram, calibrated.selector, window=window)
    elapsed = time.monotonic() - t0
    return table, elapsed
