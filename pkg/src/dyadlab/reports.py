"""Report containers and their JSON wire formats."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field


def safe_ratio(lhs: float, rhs: float) -> float:
    if rhs > 0:
        return lhs / rhs
    return 0.0 if lhs == 0 else math.inf


@dataclass
class BucketStat:
    n: int
    m: int
    sum: float
    count_bound_ratio: float


@dataclass
class RatioReport:
    """Two sides of an inequality plus per-bucket breakdowns where they exist."""

    lhs: float
    rhs: float
    ratio: float
    buckets: list[BucketStat] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_sides(cls, lhs: float, rhs: float, buckets=None, **extra) -> "RatioReport":
        return cls(
            lhs=float(lhs),
            rhs=float(rhs),
            ratio=safe_ratio(float(lhs), float(rhs)),
            buckets=list(buckets or []),
            extra=dict(extra),
        )

    def to_dict(self) -> dict:
        out = {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "ratio": self.ratio,
            "buckets": [asdict(b) for b in self.buckets],
        }
        out.update(self.extra)
        return out

    def to_json(self, indent=None) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=indent)


@dataclass
class LevelStat:
    k: int
    max_product_measure: float
    budget: float


@dataclass
class PrincipleReport:
    """Measured constants of the two-set condition and the vector conclusion."""

    p: float
    C_p: float
    B_p: float
    A_p: float
    q: float
    lhs3: float
    rhs3: float
    ratio: float
    levels: list[LevelStat] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "p": self.p,
            "C_p": self.C_p,
            "B_p": self.B_p,
            "A_p": self.A_p,
            "q": self.q,
            "lhs3": self.lhs3,
            "rhs3": self.rhs3,
            "ratio": self.ratio,
            "levels": [asdict(l) for l in self.levels],
        }
        out.update(self.extra)
        return out

    def to_json(self, indent=None) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=indent)


@dataclass
class LadderPoint:
    log_ratio: float
    log_norm: float


@dataclass
class DecayReport:
    """Operator-norm decay along a measure-ratio ladder, with the fitted slope."""

    ratio_ladder: list[LadderPoint] = field(default_factory=list)
    slope: float = 0.0
    intercept: float = 0.0
    thm71: dict | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "ratio_ladder": [asdict(pt) for pt in self.ratio_ladder],
            "slope": self.slope,
            "intercept": self.intercept,
            "thm71": self.thm71,
        }
        out.update(self.extra)
        return out

    def to_json(self, indent=None) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=indent)
