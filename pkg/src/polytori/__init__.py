"""Determinants of Laplacians and tau-functions for genus-one polyhedral surfaces.

Modules
-------
elliptic     theta functions, Dedekind eta, Weierstrass p, Bergman bidifferential
qdiff        quadratic differentials with simple zeros and poles on a torus
cover        canonical double cover, cycle basis and period coordinates
conical      flat conical (Troyanov) metrics, the determinant formula and tau
variational  finite-difference verification of the variational formulas
spectral     finite-element spectra and determinant ratios
cli          command-line entry point
"""

__version__ = "0.1.0"
