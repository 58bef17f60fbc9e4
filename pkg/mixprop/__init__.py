"""
mixprop
=======
Mixture proportion estimation under class-specific conditional independence,
plus weakly-supervised kernel (conditional) independence tests with known or
plug-in mixture proportions.
"""

__version__ = "0.3.0"
