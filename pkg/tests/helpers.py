"""Shared builders for the test-suite."""

import numpy as np

from srgkit.lti import StateSpace, numerical_rank, observability_matrix, simulate


def controllability_matrix(ss):
    blocks, AB = [], ss.B
    for _ in range(ss.n):
        blocks.append(AB)
        AB = ss.A @ AB
    return np.hstack(blocks)


def is_minimal(ss) -> bool:
    if ss.n == 0:
        return True
    return (numerical_rank(observability_matrix(ss, ss.n), 1e-6) == ss.n
            and numerical_rank(controllability_matrix(ss), 1e-6) == ss.n)


def _spectrum_blocks(rng, n, unstable):
    """Real and rotation blocks with moduli away from the unit circle."""
    blocks = []
    if unstable:
        blocks.append(np.array([[rng.choice([-1.0, 1.0]) * rng.uniform(1.04, 1.12)]]))
    size = len(blocks)
    while size < n:
        if n - size >= 2 and rng.random() < 0.4:
            r, phi = rng.uniform(0.2, 0.9), rng.uniform(0.3, 2.8)
            blocks.append(r * np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]]))
        else:
            blocks.append(np.array([[rng.uniform(-0.9, 0.9)]]))
        size += blocks[-1].shape[0]
    return blocks


def random_minimal_system(rng, n: int, m: int, unstable: bool = False) -> StateSpace:
    for _ in range(100):
        J = np.zeros((n, n))
        k = 0
        for b in _spectrum_blocks(rng, n, unstable):
            s = b.shape[0]
            J[k:k + s, k:k + s] = b
            k += s
        T = rng.standard_normal((n, n)) + 2 * np.eye(n)
        if np.linalg.cond(T) > 50:
            continue
        A = T @ J @ np.linalg.inv(T)
        ss = StateSpace(A, rng.standard_normal((n, m)), rng.standard_normal((m, n)),
                        rng.standard_normal((m, m)))
        if is_minimal(ss):
            return ss
    raise RuntimeError("could not draw a minimal system")


def random_suite(seed: int = 2024, count: int = 20):
    """`count` seeded minimal systems with n <= 4, m <= 2; every third one unstable."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, 3))
        out.append(random_minimal_system(rng, n, m, unstable=(i % 3 == 2)))
    return out


def pe_trajectory(ss, N: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    return simulate(ss, rng.standard_normal((N, ss.m)))


def static(d) -> StateSpace:
    d = np.atleast_2d(np.asarray(d, dtype=float))
    m = d.shape[0]
    return StateSpace(np.zeros((0, 0)), np.zeros((0, m)), np.zeros((m, 0)), d)
