"""Linear growth of T' for the map from the Gaussian to the Laplace law.

The derivative of the one-dimensional map grows like |x|, and no faster.
Prints T' on a few points, the fitted log-log slope and the ratio
T'(x) / (1 + |x|).
"""
import numpy as np

from otbounds import brenier_1d, make_laplace_product
from otbounds.verify import fit_loglog

T = brenier_1d(make_laplace_product(1))
xs = np.linspace(3, 10, 50)
dT = T.eigenvalues(xs[:, None])[:, 0]

for x in (0.0, 1.0, 3.0, 6.0, 10.0):
    t = T.eigenvalues([x])[0]
    print(f"x = {x:5.1f}   T(x) = {T([x])[0]:8.4f}   T'(x) = {t:7.4f}   T'/(1+|x|) = {t / (1 + x):.4f}")

slope, band, _ = fit_loglog(xs, dT, decade=False)
print(f"log-log slope of T' on [3, 10]: {slope:.3f}  (bootstrap band {band[0]:.3f} .. {band[1]:.3f})")
