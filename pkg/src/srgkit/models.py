"""Example systems used by the reproduction commands and the test-suite."""

import numpy as np

from .lti import StateSpace

_FILTER_A = [[0.94, -0.33], [1.0, 0.0]]
_FILTER_B = [[1.0], [0.0]]


def unstable_mimo() -> StateSpace:
    """Two-input, two-output system with one unstable mode (eigenvalue 1.05)."""
    A = np.diag([0.5, 1.05, -0.3, -0.9])
    B = [[-2, 0], [1, 0], [1, -2], [-1, 0]]
    C = [[0.2, -0.3, 0.4, 0], [0, 0.1, -0.3, 0.5]]
    return StateSpace(A, B, C, np.zeros((2, 2)))


def lowpass() -> StateSpace:
    return StateSpace(_FILTER_A, _FILTER_B, [[0.29, 0.07]], [[0.10]])


def highpass() -> StateSpace:
    return StateSpace(_FILTER_A, _FILTER_B, [[-0.60, 0.38]], [[0.57]])


EXAMPLES = {
    "unstable-mimo": unstable_mimo,
    "lowpass": lowpass,
    "highpass": highpass,
}
