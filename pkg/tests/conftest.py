import numpy as np
import pytest

from icbounds.net_model import AttenuationModel, Domain, NetworkConfig, NetworkInstance


def make_instance(gains, tx=None, rx=None, seed=0, fading=None):
    """Hand-built instance; positions default to the origin (unused by SNR-only code)."""
    gains = np.asarray(gains, dtype=float)
    k = gains.shape[0]
    tx = np.zeros((k, 2)) if tx is None else np.asarray(tx, dtype=float)
    rx = np.zeros((k, 2)) if rx is None else np.asarray(rx, dtype=float)
    return NetworkInstance(k, tx, rx, gains, fading, seed)


def from_snr_inr(snr, inr=None):
    """Instance with the given SNR diagonal and INR off-diagonal (``inr[j][i]``)."""
    snr = np.asarray(snr, dtype=float)
    gains = np.zeros((snr.size, snr.size)) if inr is None else np.array(inr, dtype=float)
    np.fill_diagonal(gains, snr)
    return make_instance(gains)


@pytest.fixture
def square_config():
    return NetworkConfig(Domain.unit_cube(2), AttenuationModel(4.0, 1.0, 1e6))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
