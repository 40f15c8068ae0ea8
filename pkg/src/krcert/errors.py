"""Semantic exception hierarchy shared by all krcert modules."""


class KrcertError(Exception):
    """Base class for all library errors."""


class ConstructionError(KrcertError, ValueError):
    """Invalid construction of a map, component or matrix (negative
    coefficients, wrong degrees, dimension mismatch, ...)."""


class DomainError(KrcertError, ValueError):
    """Evaluation point lies outside the declared domain box."""


class NoRootError(KrcertError, ArithmeticError):
    """Inversion target lies outside the range of a monotone component."""


class DegenerateSetError(KrcertError, ValueError):
    """A good set with zero reference measure (or an empty box union)."""


class DegeneratePairError(KrcertError, ValueError):
    """Every sampled pair had zero base-metric distance."""


class ParameterError(KrcertError, ValueError):
    """A numeric parameter violates its contract (counts, budgets,
    confidence levels, matrix shapes)."""


class ConfigError(KrcertError, ValueError):
    """Malformed, missing or inconsistent CLI configuration."""
