"""Vector-valued tensor fields and differential forms on chart atlases.

Coefficients are symbolic expressions in chart coordinates, values live in
finite-dimensional real or complex spaces with a fixed separating dual
family, and integrals of top-degree forms are evaluated with tensor
Gauss-Legendre rules glued by smooth partitions of unity.
"""

__version__ = "0.1.0"
