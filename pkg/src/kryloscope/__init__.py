"""Krylov-chain operator-growth dynamics."""

__version__ = "0.1.0"

from .profiles import LanczosProfile, OperatorSpaceProblem, eval_b, eval_b_prime  # noqa: E402,F401
