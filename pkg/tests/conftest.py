"""Shared fixtures: the worked 7x4 example used across the suite.

The small dataset has true mean (1, 2, 3, 4); row 4 of the observed matrix
was corrupted (values 0.5, 2.6, 5.0 and an extra present coordinate).
"""

import numpy as np
import pytest

from rimm import IncompleteMatrix

MISS = None

OBSERVED_ROWS = [
    [MISS, MISS, 2.9, MISS],
    [0.9, MISS, 2.8, 3.9],
    [MISS, MISS, MISS, 4.1],
    [0.5, 2.6, MISS, 5.0],
    [MISS, MISS, MISS, MISS],
    [MISS, 2.0, 2.9, MISS],
    [1.2, 2.1, MISS, MISS],
]

FULL_ROWS = np.array(
    [
        [1.2, 1.8, 2.9, 4.0],
        [0.9, 2.2, 2.8, 3.9],
        [0.8, 1.9, 3.1, 4.1],
        [1.1, 2.1, 2.9, 4.1],
        [1.0, 2.0, 3.0, 3.8],
        [1.2, 2.0, 2.9, 4.2],
        [1.2, 2.1, 3.2, 3.9],
    ]
)

# step-1 presence choices (before the adversary touched row 4)
PLAN_MASK = np.array(
    [
        [0, 0, 1, 0],
        [1, 0, 1, 1],
        [0, 0, 0, 1],
        [1, 0, 0, 1],
        [0, 0, 0, 0],
        [0, 1, 1, 0],
        [1, 1, 0, 0],
    ],
    dtype=bool,
)

TRUE_MEAN = np.array([1.0, 2.0, 3.0, 4.0])


def rows_to_matrix(rows) -> IncompleteMatrix:
    mask = np.array([[v is not MISS for v in r] for r in rows])
    values = np.array([[0.0 if v is MISS else v for v in r] for r in rows])
    return IncompleteMatrix(values, mask)


@pytest.fixture
def observed() -> IncompleteMatrix:
    return rows_to_matrix(OBSERVED_ROWS)


@pytest.fixture
def full_rows() -> np.ndarray:
    return FULL_ROWS.copy()


@pytest.fixture
def plan_mask() -> np.ndarray:
    return PLAN_MASK.copy()
