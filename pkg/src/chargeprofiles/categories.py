"""Vocabulary of basic administrative unit (ZSJ) area categories.

The twelve categories below are a closed enumeration; CSV inputs must spell
them exactly (case-sensitive). Their order fixes the one-hot layout of the
model feature vector.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError

CATEGORIES: tuple[str, ...] = (
    "Compact residential area",
    "Urban and suburban mixed area",
    "Residential and recreational area",
    "Separated residential area",
    "Transportation infrastructure area",
    "Civic amenities area",
    "Recreational area",
    "Other purpose area",
    "Industrial area",
    "Reserve area",
    "Agricultural area",
    "Forest area",
)

CATEGORY_INDEX: dict[str, int] = {name: i for i, name in enumerate(CATEGORIES)}

N_CATEGORIES = len(CATEGORIES)


def category_index(name: str) -> int:
    """Index of a category name, raising InputError for unknown spellings."""
    try:
        return CATEGORY_INDEX[name]
    except KeyError:
        raise InputError(f"unknown ZSJ category {name!r}; expected one of {list(CATEGORIES)}") from None


def one_hot(name: str) -> np.ndarray:
    """One-hot encoding of a category over the fixed 12-slot layout."""
    vec = np.zeros(N_CATEGORIES, dtype=np.float64)
    vec[category_index(name)] = 1.0
    return vec
