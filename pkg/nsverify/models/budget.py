import math
from dataclasses import asdict, dataclass, field as dataclass_field
from typing import Tuple

from ..exceptions import BudgetError


@dataclass(frozen=True)
class TwoDBudget:
    """Constants bounding the two-dimensional base flow window by window."""

    nu: float
    T: float
    c_s1: float
    A1_sq: float
    A2_sq: float
    A3_sq: float
    A4_sq: float
    A5_sq: float
    k_max: int
    window_forcing: Tuple[float, ...] = ()

    def __post_init__(self):
        for name in ('A1_sq', 'A2_sq', 'A3_sq', 'A4_sq', 'A5_sq'):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise BudgetError(f"{name}={value} must be finite and nonnegative")
        if not math.isclose(self.A3_sq, self.A1_sq + self.A2_sq, rel_tol=1e-12, abs_tol=1e-300):
            raise BudgetError("A3^2 must equal A1^2 + A2^2")
        if not math.isclose(self.A5_sq, self.A1_sq + self.A4_sq, rel_tol=1e-12, abs_tol=1e-300):
            raise BudgetError("A5^2 must equal A1^2 + A4^2")

    def to_dict(self):
        out = asdict(self)
        out['window_forcing'] = list(self.window_forcing)
        return out


@dataclass(frozen=True)
class StabilityBudget:
    """Smallness parameters of the H^1 stability argument.

    Construction fails unless nu*c4 - c5*gamma_star^2/nu^3 >= c_star/2,
    c_star < nu*c4 and 0 < gamma <= gamma_star.
    """

    nu: float
    T: float
    gamma: float
    gamma_star: float
    c_star: float
    alpha: float
    c1: float
    c3: float
    c4: float
    c5: float
    notes: Tuple[str, ...] = dataclass_field(default=())

    def __post_init__(self):
        for name in ('nu', 'T', 'gamma', 'gamma_star', 'c_star', 'alpha', 'c1', 'c3', 'c4', 'c5'):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise BudgetError(f"{name}={value} must be finite and positive")
        if self.gamma_star_margin < -1e-14 * self.nu * self.c4:
            raise BudgetError(
                f"(4.19) violated: nu*c4 - c5*gamma_star^2/nu^3 = "
                f"{self.nu * self.c4 - self.c5 * self.gamma_star ** 2 / self.nu ** 3:.6g}"
                f" < c_star/2 = {self.c_star / 2:.6g}")
        if not self.c_star < self.nu * self.c4:
            raise BudgetError(f"(4.19) violated: c_star={self.c_star} must be below nu*c4={self.nu * self.c4}")
        if self.gamma > self.gamma_star:
            raise BudgetError(f"(4.19) violated: gamma={self.gamma} exceeds gamma_star={self.gamma_star}")

    @property
    def gamma_star_margin(self):
        """nu*c4 - c5*gamma_star^2/nu^3 - c_star/2."""
        return self.nu * self.c4 - self.c5 * self.gamma_star ** 2 / self.nu ** 3 - self.c_star / 2.0

    def to_dict(self):
        out = asdict(self)
        out['notes'] = list(self.notes)
        out['gamma_star_margin'] = self.gamma_star_margin
        return out
