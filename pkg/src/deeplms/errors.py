"""Exception types raised by the library."""


class DeepLmsError(ValueError):
    """Base class for all library errors."""


class ZeroDiagonal(DeepLmsError):
    """An effective direct gain (H W_P)_ii is too small to normalize."""


class DomainError(DeepLmsError):
    """The input SINR is too low for the convergence bounds to apply (Phi <= alpha)."""


class DivergentF(DeepLmsError):
    """The MSE propagation matrix has an eigenvalue >= 1."""


class SingularCovariance(DeepLmsError):
    """The input covariance is not positive definite."""


class ChannelFileError(DeepLmsError):
    """A channel or snapshot text file could not be parsed."""
