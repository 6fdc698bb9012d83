"""Variable/parameter declarations shared by all expressions of a model.

A Context fixes the ordered tuple of state variables, the ordered tuple of
scalar parameters, the designated deterministic time variable (if any), and an
open-interval domain per variable. Expressions are only compatible when they
were built against equal contexts.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from .errors import DeclarationMismatch

_NAME = re.compile(r"^[A-Za-z_][A-Za-z_0-9]*$")

_INF = math.inf


@dataclass(frozen=True)
class Context:
    variables: tuple[str, ...]
    parameters: tuple[str, ...] = ()
    time_var: str | None = None
    # bounds[i] is the open interval for variables[i]
    bounds: tuple[tuple[float, float], ...] = field(default=())

    def __post_init__(self):
        names = list(self.variables) + list(self.parameters)
        for name in names:
            if not _NAME.match(name) or name in ("exp", "sqrt"):
                raise DeclarationMismatch(f"bad symbol name {name!r}")
        if len(set(names)) != len(names):
            raise DeclarationMismatch("variable/parameter names must be distinct")
        if self.time_var is not None and self.time_var not in self.variables:
            raise DeclarationMismatch(f"time variable {self.time_var!r} is not declared")
        if not self.bounds:
            object.__setattr__(self, "bounds", tuple((-_INF, _INF) for _ in self.variables))
        if len(self.bounds) != len(self.variables):
            raise DeclarationMismatch("one bound pair per variable required")
        for lo, hi in self.bounds:
            if not lo < hi:
                raise DeclarationMismatch("domain bounds must be an open interval")

    @property
    def nvars(self) -> int:
        return len(self.variables)

    @property
    def nparams(self) -> int:
        return len(self.parameters)

    def var_index(self, name: str) -> int:
        try:
            return self.variables.index(name)
        except ValueError:
            raise DeclarationMismatch(f"unknown variable {name!r}") from None

    def param_index(self, name: str) -> int:
        try:
            return self.parameters.index(name)
        except ValueError:
            raise DeclarationMismatch(f"unknown parameter {name!r}") from None

    def time_index(self) -> int | None:
        return None if self.time_var is None else self.var_index(self.time_var)

    def require_same(self, other: "Context") -> None:
        if self != other:
            raise DeclarationMismatch("operands use different declarations")

    def sample_point(self, rng) -> dict[str, float]:
        """Draw one numeric probe point strictly inside every declared domain."""
        point = {}
        for name, (lo, hi) in zip(self.variables, self.bounds):
            a = max(lo, -2.5) + 0.15
            b = min(hi, 2.5) - 0.15
            if not a < b:  # very narrow declared interval: fall back to midpoint jitter
                mid = 0.5 * (max(lo, -2.5) + min(hi, 2.5))
                a, b = mid - 1e-3, mid + 1e-3
            point[name] = float(rng.uniform(a, b))
        return point

    def sample_params(self, rng, low: float = 0.5, high: float = 2.0) -> dict[str, float]:
        return {name: float(rng.uniform(low, high)) for name in self.parameters}
