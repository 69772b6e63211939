"""Input checks shared by the estimator and the command line."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array, check_X_y

from .exceptions import DimensionError


def validate_xy(X, y, min_rows: int = 2):
    """Return float arrays ``(X (T, K), y (T,))`` or raise ``ValueError``."""
    X, y = check_X_y(X, y, dtype=float, y_numeric=True, ensure_min_samples=min_rows)
    return X, np.asarray(y, dtype=float)


def validate_x(X, n_features: int):
    X = check_array(X, dtype=float, ensure_2d=False)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != n_features:
        raise DimensionError(f"X has {X.shape[1]} features, the model was fitted with {n_features}")
    return X


def check_positive_int(value, name: str, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_choice(value, name: str, choices):
    if value not in choices:
        raise ValueError(f"{name} must be one of {sorted(choices)}, got {value!r}")
    return value
