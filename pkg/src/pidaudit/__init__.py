"""Information-theoretic attribution of decision disparity to features.

Main entry points:

* :func:`pidaudit.pid.decompose` -- bivariate partial information decomposition
* :func:`pidaudit.attribution.potential_contributions` -- distributional attribution
* :func:`pidaudit.attribution.interventional_contributions` -- model-based attribution
"""
__version__ = "0.1.0"
