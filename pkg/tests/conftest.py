import numpy as np
import pytest

from tsint.interactions import pairwise_distances


def build_perfect_teacher_batch(seed=0, n_groups=10, k=4, n_classes=30, rate=0.5):
    """Teacher distances for a noisy batch where the teacher separates clean classes.

    Each clean class sits near its own basis vector, so same-clean-class pairs are
    closer than 0.2 and every other pair is about sqrt(2) apart.
    Returns ``(teacher_distances, observed_labels, clean_labels)``.
    """
    rng = np.random.default_rng(seed)
    observed = np.repeat(rng.choice(n_classes, n_groups, replace=False), k)
    clean = observed.copy()
    flip = rng.random(observed.size) < rate
    clean[flip] = (observed[flip] + rng.integers(1, n_classes, flip.sum())) % n_classes
    z = np.eye(n_classes)[clean] + 0.01 * rng.standard_normal((observed.size, n_classes))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    dist = pairwise_distances(z)
    same = clean[:, None] == clean[None, :]
    assert dist[same].max() < 0.2 and dist[~same].min() > 0.8
    return dist, observed, clean


@pytest.fixture
def perfect_teacher():
    return build_perfect_teacher_batch()


ACCEPTANCE = {}


def record_criterion(number, passed, detail):
    """Store one acceptance result; printed in the terminal summary."""
    ACCEPTANCE[number] = (passed, detail)
    print(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(
            f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
