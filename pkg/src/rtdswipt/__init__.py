"""Input distribution design for SWIPT receivers with non-monotone RTD energy harvesters.

Modules
-------
specfun        Gaussian tail, scaled erfi, Simpson quadrature and bisection
eh_model       piecewise logistic harvesting curves, monotone restriction, fitting, file I/O
distributions  transmit and received-signal distributions
metrics        output densities, entropies, mutual information and achievable rates
optimizer      optimal, achievable and closed-form designs plus the truncated-Gaussian baseline
channel        path gain and Rician fading
cli            experiment driver
"""

__version__ = "0.1.0"
