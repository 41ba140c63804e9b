from __future__ import annotations

from dataclasses import asdict, dataclass, replace

__all__ = ["EpidemicParams"]


@dataclass(frozen=True)
class EpidemicParams:
    """Rates of the SIRS-with-vaccination process (all per unit time).

    beta
        infection rate per S-I edge
    delta
        recovery rate I -> R
    gamma
        immunity-loss rate R -> S
    sigma
        vaccination rate S -> R
    epsilon
        weight of edges between partition cells (dimensionless)
    """

    beta: float
    delta: float
    gamma: float
    sigma: float = 0.0
    epsilon: float = 1.0

    def __post_init__(self):
        for name in ("beta", "delta", "gamma", "epsilon"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma!r}")

    @property
    def tau(self) -> float:
        """Effective infection rate beta/delta."""
        return self.beta / self.delta

    def replace(self, **changes) -> "EpidemicParams":
        return replace(self, **changes)

    def as_dict(self) -> dict[str, float]:
        return asdict(self)
