"""Residual reports returned by every check."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

CURVATURE_CONVENTION = (
    "R[k,s,i,j] = d_i G^k_{js} - d_j G^k_{is} + G^k_{ir} G^r_{js} - G^k_{jr} G^r_{is}, "
    "so that R(d_i, d_j) d_s = R[k,s,i,j] d_k"
)
CHRISTOFFEL_CONVENTION = "G[k,i,j] = G^k_{ij}, nabla_{d_i} d_j = G^k_{ij} d_k"
PRODUCT_CONVENTION = "c[k,i,j] = c^k_{ij}, d_i o d_j = c^k_{ij} d_k"


def max_abs(x) -> float:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return 0.0
    return float(np.max(np.abs(x)))


@dataclass(frozen=True)
class Report:
    check: str
    items: tuple
    tolerance: float
    point: tuple = ()
    order: int | None = None
    convention_notes: tuple = ()
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "items", tuple((str(n), float(r)) for n, r in self.items))
        object.__setattr__(self, "point", tuple(float(p) for p in self.point))
        object.__setattr__(self, "convention_notes", tuple(self.convention_notes))

    @property
    def max_residual(self) -> float:
        if not self.items:
            return 0.0
        vals = [r for _, r in self.items]
        if any(not math.isfinite(v) for v in vals):
            return math.inf
        return max(vals)

    @property
    def verdict(self) -> bool:
        return self.max_residual <= self.tolerance

    @property
    def passed(self) -> bool:
        return self.verdict

    def residual(self, name) -> float:
        for n, r in self.items:
            if n == name:
                return r
        raise KeyError(name)

    def __getitem__(self, name):
        return self.residual(name)

    def to_dict(self) -> dict:
        out = {
            "check": self.check,
            "items": [{"name": n, "residual": r} for n, r in self.items],
            "verdict": self.verdict,
            "point": list(self.point),
            "order": self.order,
            "tolerance": self.tolerance,
            "convention_notes": list(self.convention_notes),
        }
        if self.info:
            out["info"] = _jsonable(self.info)
        return out

    def summary(self) -> str:
        status = "PASS" if self.verdict else "FAIL"
        lines = [f"{self.check}: {status} (max residual {self.max_residual:.3g}, tol {self.tolerance:.3g})"]
        for n, r in self.items:
            lines.append(f"  {n:<28s} {r:.17g}")
        return "\n".join(lines)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x
