from typing import Tuple

import numpy as np
from scipy import stats

from specrank.errors import DegenerateInput, ValidationError


def pearson_r(x, y) -> Tuple[float, float]:
    """
    Sample Pearson correlation with a two-sided p-value from the t transform

    Raises:
        ValidationError: length mismatch or fewer than 3 pairs
        DegenerateInput: zero variance in x or y
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("x and y must be vectors of equal length")
    n = x.shape[0]
    if n < 3:
        raise ValidationError(f"pearson_r needs at least 3 pairs, got {n}")

    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInput("pearson_r is undefined for a constant vector")

    r = float(np.clip((dx @ dy) / np.sqrt(sxx * syy), -1.0, 1.0))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * np.sqrt((n - 2) / (1.0 - r * r))
    p = float(2.0 * stats.t.sf(abs(t), df=n - 2))
    return r, p
