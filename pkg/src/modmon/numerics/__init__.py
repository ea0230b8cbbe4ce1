from modmon.numerics.autodiff import (
    ParameterSet,
    Tensor,
    finite_difference_check,
    finite_difference_gradient,
    gradient,
)
from modmon.numerics.rng import (
    RngStream,
    sample_bounded_power_law,
    sample_gaussian_vector,
    sample_poisson,
)

__all__ = [
    "ParameterSet",
    "RngStream",
    "Tensor",
    "finite_difference_check",
    "finite_difference_gradient",
    "gradient",
    "sample_bounded_power_law",
    "sample_gaussian_vector",
    "sample_poisson",
]
