"""Shared numeric tolerances.

Every module validates against the same configuration record so that
property tests across the package agree on what "equal" means.  Two
scales are distinguished: exact linear algebra (Pauli decompositions,
polynomial coefficients) and quantities that went through a stochastic
integrator.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    algebraic: float = 1e-12        # matrix identities, Bloch round trips
    integrator: float = 1e-9        # anything downstream of an SDE step
    pole_guard: float = 1e-6        # refuse invariant evaluation this close to a pole
    rank_threshold: float = 1e-8    # singular values below this (relative) count as zero
    coefficient_cleanup: float = 1e-13   # drop polynomial coefficients below this after a bracket
    basis_independence: float = 1e-10    # Gaussian-elimination threshold for new Lie basis fields


DEFAULT = Tolerances()
