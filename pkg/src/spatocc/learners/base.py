"""Shared learner plumbing: fitted-surface container and coordinate scaling.

Every learner standardizes training coordinates to the unit square and
remembers the training bounding box, so one set of default
hyperparameters is meaningful across datasets in different units.
Queries are mapped through the same box at prediction time; points
outside it land outside [0, 1]^2 and are handled by each learner's
extrapolation rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Mapping

import numpy as np

from ..errors import ValidationError


def as_coords(coords, allow_empty=False):
    """Validate and return an (n, 2) float64 array of site coordinates."""
    arr = np.ascontiguousarray(coords, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValidationError(f"coords must have shape (n, 2), got {arr.shape}")
    if arr.shape[0] < 1 and not allow_empty:
        raise ValidationError("need at least one site")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("coords must be finite")
    return arr


def as_targets(targets, n):
    """Validate and return an (n,) float64 target vector."""
    arr = np.ascontiguousarray(targets, dtype=float)
    if arr.shape != (n,):
        raise ValidationError(f"targets must have shape ({n},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("targets must be finite")
    return arr


def coord_bbox(coords):
    """Axis-aligned bounding box (x0, y0, x1, y1) of training coordinates."""
    arr = as_coords(coords)
    return (
        float(arr[:, 0].min()),
        float(arr[:, 1].min()),
        float(arr[:, 0].max()),
        float(arr[:, 1].max()),
    )


def _spans(bbox):
    # zero-extent axes keep scale 1 so the map stays finite
    sx = bbox[2] - bbox[0]
    sy = bbox[3] - bbox[1]
    return (sx if sx > 0.0 else 1.0), (sy if sy > 0.0 else 1.0)


def to_unit(coords, bbox):
    """Map raw coordinates into the unit square defined by ``bbox``."""
    arr = as_coords(coords, allow_empty=True)
    sx, sy = _spans(bbox)
    out = np.empty_like(arr)
    out[:, 0] = (arr[:, 0] - bbox[0]) / sx
    out[:, 1] = (arr[:, 1] - bbox[1]) / sy
    return out


def from_unit_x(x, bbox):
    """Inverse of the x-axis unit map (used to report splits in input units)."""
    sx, _ = _spans(bbox)
    return bbox[0] + np.asarray(x, dtype=float) * sx


def from_unit_y(y, bbox):
    _, sy = _spans(bbox)
    return bbox[1] + np.asarray(y, dtype=float) * sy


@dataclass(frozen=True)
class FittedSurface:
    """Immutable fitted spatial surface f(s).

    Attributes
    ----------
    kind : str
        One of "tree", "svr", "lowrank_gp", "gmrf", "none".
    bbox : tuple of float
        Training bounding box (x0, y0, x1, y1) in input units. Queries
        are standardized through it before evaluation.
    params : mapping
        Kind-specific fitted parameters. ndarray values are made
        read-only; scalars stay plain floats/ints.
    """

    kind: str
    bbox: tuple
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.bbox) != 4 or not all(np.isfinite(v) for v in self.bbox):
            raise ValidationError("bbox must be 4 finite numbers (x0, y0, x1, y1)")
        if self.bbox[2] < self.bbox[0] or self.bbox[3] < self.bbox[1]:
            raise ValidationError("bbox must satisfy x0 <= x1 and y0 <= y1")
        object.__setattr__(self, "bbox", tuple(float(v) for v in self.bbox))
        frozen = {}
        for key, val in dict(self.params).items():
            if isinstance(val, np.ndarray):
                val = np.ascontiguousarray(val)
                val.setflags(write=False)
            frozen[key] = val
        object.__setattr__(self, "params", MappingProxyType(frozen))
