"""
Resource arithmetic: plumbing-piece volumes, extrapolation of logical error
rates to large distances, overhead tables and curve diagnostics.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy.stats import linregress

from tcsloss.errors import DomainError, NonSuppressingError, ValidationError

logger = logging.getLogger(__name__)

CONVENTIONS = ("floor", "round", "exact")
MAX_DISTANCE = 999


def d_e(d: int) -> int:
    """Fewest errors that can cause a logical failure through mismatching."""
    if d < 1:
        raise ValidationError(f"d must be >= 1, got {d}")
    return (d + 1) // 2


def min_loss_failures(d: int, lint: bool) -> int:
    """Fewest losses that can cause a logical failure."""
    if d < 3:
        raise ValidationError(f"d must be >= 3, got {d}")
    return (d + 3) // 4 if lint else d - 1


@dataclass(frozen=True)
class PlumbingPiece:
    d: int
    n: float
    V: float
    q_phys: float
    convention: str = "floor"


def plumbing(d: int, convention: str = "floor") -> PlumbingPiece:
    """Edge length n ~ 5d/4 cells; six qubits per cell give V = 6n^3 and 6n^2 qubits."""
    if d < 3:
        raise ValidationError(f"d must be >= 3, got {d}")
    if convention == "floor":
        n = (5 * d) // 4
    elif convention == "round":
        n = int(math.floor(5 * d / 4 + 0.5))
    elif convention == "exact":
        n = 5 * d / 4
    else:
        raise ValidationError(f"unknown convention {convention!r}; choose from {CONVENTIONS}")
    return PlumbingPiece(d, n, 6 * n ** 3, 6 * n ** 2, convention)


def extrapolate(a: float, b: float, d_b: int, d_target: int) -> float:
    """b / (a/b) ** floor((d_target - d_b) / 2)."""
    if not (a > 0 and b > 0):
        raise DomainError("logical error rates must be positive")
    if b >= a:
        raise NonSuppressingError(f"P_L does not fall with distance (a={a:g}, b={b:g})")
    if d_target < d_b:
        raise ValidationError(f"target distance {d_target} below the highest simulated distance {d_b}")
    return b / (a / b) ** ((d_target - d_b) // 2)


def overhead_label(ratio: float) -> str:
    """Ratio rounded to one significant figure, e.g. '2×'."""
    if ratio <= 0:
        raise DomainError("ratio must be positive")
    exponent = math.floor(math.log10(ratio))
    lead = round(ratio / 10 ** exponent)
    value = lead * 10 ** exponent
    return f"{value:g}×"


@dataclass(frozen=True)
class CurveInput:
    """Measured P_L by distance at one p_loss."""

    measured: Mapping[int, float] = field(default_factory=dict)

    @classmethod
    def from_extrapolation(cls, a: float, b: float, d_b: int) -> "CurveInput":
        return cls({d_b - 2: a, d_b: b})

    def top_two(self) -> tuple[float, float, int] | None:
        usable = sorted(d for d, p in self.measured.items() if p > 0)
        if len(usable) < 2:
            return None
        d_a, d_b = usable[-2:]
        return self.measured[d_a], self.measured[d_b], d_b


@dataclass(frozen=True)
class OverheadRow:
    p_loss: float | None
    d: int | None
    V: float | None
    q_phys: float | None
    ratio: float | None
    label: str
    p_l: float | None = None

    @property
    def reachable(self) -> bool:
        return self.d is not None

    def as_dict(self) -> dict:
        return {
            "overhead": self.label,
            "p_loss": "None" if self.p_loss is None else self.p_loss,
            "d": "-" if self.d is None else self.d,
            "V": "-" if self.V is None else self.V,
            "q_phys": "-" if self.q_phys is None else self.q_phys,
            "ratio": "-" if self.ratio is None else self.ratio,
        }


def required_distance(curve: CurveInput, target: float, max_d: int = MAX_DISTANCE) -> tuple[int, float] | None:
    """Smallest odd d whose measured or extrapolated P_L reaches the target."""
    for d in sorted(curve.measured):
        p = curve.measured[d]
        if 0 < p <= target:
            return d, p
    top = curve.top_two()
    if top is None:
        return None
    a, b, d_b = top
    if b >= a:
        return None
    d = d_b + 2
    while d <= max_d:
        p = extrapolate(a, b, d_b, d)
        if p <= target:
            return d, p
        d += 2
    return None


def overhead_table(curves: Mapping[float, CurveInput], target: float, baseline_d: int,
                   convention: str = "floor") -> list[OverheadRow]:
    """One row per p_loss (ascending) plus the lossless baseline row first."""
    base = plumbing(baseline_d, convention)
    rows = [OverheadRow(None, baseline_d, base.V, base.q_phys, 1.0, "1×")]
    for p_loss in sorted(curves):
        hit = required_distance(curves[p_loss], target)
        if hit is None:
            logger.info("p_loss=%g never reaches P_L=%g", p_loss, target)
            rows.append(OverheadRow(p_loss, None, None, None, None, "-"))
            continue
        d, p_l = hit
        piece = plumbing(d, convention)
        ratio = piece.V / base.V
        rows.append(OverheadRow(p_loss, d, piece.V, piece.q_phys, ratio, overhead_label(ratio), p_l))
    return rows


def overhead_frame(rows: Sequence[OverheadRow]) -> pd.DataFrame:
    return pd.DataFrame([r.as_dict() for r in rows], columns=["overhead", "p_loss", "d", "V", "q_phys", "ratio"])


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float
    intercept: float


def fit_slope(points: Iterable[tuple[float, float]]) -> SlopeFit:
    """Least-squares slope of log P_L against log p_loss."""
    points = list(points)
    if len(points) < 3:
        raise ValidationError(f"need at least 3 points, got {len(points)}")
    x, y = np.asarray(points, dtype=float).T
    if (x <= 0).any() or (y <= 0).any():
        raise DomainError("log-log fit needs positive p_loss and P_L")
    fit = linregress(np.log(x), np.log(y))
    return SlopeFit(float(fit.slope), float(fit.stderr), float(fit.intercept))


def curves_from_frame(frame: pd.DataFrame, p_comp: float | None = None,
                      p_lint: float | None = None) -> dict[float, CurveInput]:
    """Group sweep rows into per-p_loss curves (p_loss = 0 rows excluded)."""
    df = frame
    if p_comp is not None:
        df = df[np.isclose(df["p_comp"], p_comp)]
    if p_lint is not None:
        df = df[np.isclose(df["p_lint"], p_lint)]
    out = {}
    for p_loss, group in df[df["p_loss"] > 0].groupby("p_loss"):
        out[float(p_loss)] = CurveInput({int(d): float(p) for d, p in zip(group["d"], group["P_L"])})
    return out


def threshold_bracket(frame: pd.DataFrame) -> tuple[float, float] | None:
    """Adjacent p_loss points between which the largest distance stops beating the smallest."""
    ds = sorted(frame["d"].unique())
    if len(ds) < 2:
        return None
    pivot = frame.pivot_table(index="p_loss", columns="d", values="P_L").dropna()
    low, high = pivot[ds[0]], pivot[ds[-1]]
    below = (high < low).to_numpy()
    grid = pivot.index.to_numpy()
    for k in range(len(grid) - 1):
        if below[k] and not below[k + 1]:
            return float(grid[k]), float(grid[k + 1])
    return None


def negligible_loss_rate(frame: pd.DataFrame, d: int) -> float | None:
    """Largest p_loss whose interval still overlaps the lossless estimate at distance d."""
    rows = frame[frame["d"] == d].sort_values("p_loss")
    base = rows[rows["p_loss"] == 0]
    if base.empty:
        raise ValidationError(f"no p_loss = 0 row for d={d}")
    b_low, b_high = float(base["ci_low"].iloc[0]), float(base["ci_high"].iloc[0])
    best = None
    for _, row in rows[rows["p_loss"] > 0].iterrows():
        if row["ci_low"] <= b_high and row["ci_high"] >= b_low:
            best = float(row["p_loss"])
        else:
            break
    return best


def sweep_summary(frame: pd.DataFrame) -> dict:
    """Threshold bracket and, per distance with a lossless point, the negligible loss rate."""
    negligible = {}
    for d in sorted(frame["d"].unique()):
        if (frame[frame["d"] == d]["p_loss"] == 0).any():
            negligible[str(int(d))] = negligible_loss_rate(frame, int(d))
    bracket = threshold_bracket(frame)
    return {"threshold_bracket": list(bracket) if bracket else None, "negligible_loss_rate": negligible}
