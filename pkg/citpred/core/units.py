from typing import Literal

import numpy as np

FOOT_IN_METERS = 0.3048


def convert_units(value, unit: Literal["feet", "meters"] = "meters"):
    """Converts a length (scalar or array) to meters."""
    if unit == "feet":
        return np.multiply(value, FOOT_IN_METERS)
    if unit == "meters":
        return value
    raise ValueError(f"unknown length unit: {unit!r}")
