"""Variational quantities: ``Lambda``, ``J``, ``J_r``, ``I_n``, ``K*`` and scaling checks."""

from .core import (KernelFunction, LocalKernel, Profile, as_kernel, gaussian_kernel, kernel_from_covariance,
                   kernel_from_density, lag_weights, power_kernel, quadratic_form)
from .hierarchy import (I1Table, Library, MixtureProblem, build_i1_table, double_conjugate, i_n, kstar,
                        optimal_profiles)
from .lam import LadderResult, LambdaResult, lambda_limit, lambda_of_alpha, run_ladder
from .rate import RateTable, build_rate_table, default_alphas, legendre_transform
from .scaling import gn_constant, riesz_quadratic, scaling_analysis, sech_oracle
from .tails import i1, j_r

__all__ = [
    "KernelFunction", "LocalKernel", "Profile", "as_kernel", "gaussian_kernel", "kernel_from_covariance",
    "kernel_from_density", "lag_weights", "power_kernel", "quadratic_form",
    "I1Table", "Library", "MixtureProblem", "build_i1_table", "double_conjugate", "i_n", "kstar",
    "optimal_profiles", "LadderResult", "LambdaResult", "lambda_limit", "lambda_of_alpha", "run_ladder",
    "RateTable", "build_rate_table", "default_alphas", "legendre_transform",
    "gn_constant", "riesz_quadratic", "scaling_analysis", "sech_oracle", "i1", "j_r",
]
