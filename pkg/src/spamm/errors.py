class DomainError(ValueError):
    """Parameter outside the domain of a density (non-SPD covariance, kappa <= 0, ...)."""


class NumericError(ArithmeticError):
    """A numerical factorization or fit failed."""


class ZeroDensityError(NumericError):
    """A sample has zero density under every mixture component."""

    def __init__(self, index: int):
        super().__init__(f"sample {index} has zero density under the mixture")
        self.index = index
