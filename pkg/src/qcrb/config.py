"""Central table of numerical tolerances.

Every verdict produced by this package is gated by one of the values
below.  They are all overridable (CLI ``--tol name=value``) and every
report echoes the table that was actually used, so numerical decisions
stay auditable.  Unless stated otherwise a tolerance is applied
relative to ``1 + ||.||_F`` of the operands.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    herm: float = 1e-10          # hermiticity gate
    eig: float = 1e-10           # eigendecomposition residuals
    diag: float = 1e-8           # off-diagonal mass after joint diagonalization
    comm: float = 1e-8           # commutativity gate for joint diagonalization
    sv: float = 1e-8             # singular-value truncation (Gram-based SVD floor)
    state: float = 1e-10         # density-matrix invariants
    trace: float = 1e-7          # trace of state derivatives
    rank: float = 1e-8           # eigenvalue threshold separating range from null space
    gap: float = 1e4             # minimum ratio (smallest kept)/(largest dropped)
    nullblock: float = 1e-6      # allowed null-null mass of state derivatives
    sld: float = 1e-9            # residual of the block SLD equations
    cond: float = 1e-8           # condition residuals (commutators, effect constants)
    c4: float = 1e-8             # column-proportionality residuals
    consistency: float = 1e-6    # |c_lm * c_ml - 1| gate for paired constants
    zero: float = 1e-8           # "this block/column is zero" threshold
    prob: float = 1e-10          # regular/null outcome probability threshold
    povm: float = 1e-9           # POVM completeness and PSD slack
    projective: float = 1e-8     # E^2 = E and orthogonality of projective effects
    cluster: float = 1e-7        # joint-eigenvalue clustering width
    pde: float = 1e-5            # residual gate for the frame-change PDE (FD-limited)
    sat: float = 1e-7            # saturation identity gates
    fd_step: float = 1e-5        # default central-difference step
    fisher_cond: float = 1e12    # max condition number of an invertible Fisher matrix

    def replace(self, **overrides: float) -> "Tolerances":
        return dataclasses.replace(self, **overrides)

    def as_dict(self) -> dict[str, float]:
        return dataclasses.asdict(self)


DEFAULT = Tolerances()


def parse_overrides(pairs: list[str]) -> dict[str, float]:
    """Parse ``name=value`` strings into a tolerance override dict."""
    names = {f.name for f in dataclasses.fields(Tolerances)}
    out: dict[str, float] = {}
    for item in pairs:
        name, _, value = item.partition("=")
        name = name.strip()
        if name not in names or not value:
            raise ValueError(f"unknown tolerance override {item!r}")
        out[name] = float(value)
    return out
