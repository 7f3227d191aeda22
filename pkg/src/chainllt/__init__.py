"""Spectral numerics and Monte Carlo verification for local limit behavior
of time-modulated additive functionals of finite-state Markov chains."""

from . import errors
from .kernel import (FourierOperator, PropagatorConfig, fourier_operator,
                     frozen_operator, nagaev_value, operator_product,
                     remainder_operator, unit_interval_operators)
from .model import (GeneratorModel, TransitionMatrix, dyadic_mixing_time,
                    ergodicity_certificate, invariant_measure, make_model,
                    rescale_generator, transition_matrix, validate_generator)
from .observable import Observable, SpanReport, center, span_check
from .simulate import (CharFnEstimate, DuhamelObservable, FastSlowRun,
                       PathSample, char_function_mc, fastslow_run,
                       integrate_S, integrate_S_rho, sample_ensemble,
                       sample_path)
from .spectral import (ResidualRecord, ScanReport, SpectralDecomposition,
                       dominant_decomposition, nonarithmetic_scan,
                       product_residual, rebase_sampling, spectral_radius)
from .variance import (Corrector, McEstimate, SigmaMatrix, corrector_solve,
                       hessian_fd, hessian_green_kubo, hessian_mc,
                       lambda_gradient_check, sigma_total)
from .verify import (DensityKernel, TestBank, default_bank, eigprod_check,
                     fastslow_llt_check, geometric_decay_check, llt_check,
                     llt_rho_check, nagaev_check)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
