"""
vnlab
=====
Finite-dimensional subalgebra information: conditional expectations,
entropies and generalized conditional mutual information over commuting
squares, the S-/T-operation resource theory, non-classicality measures
and entropic uncertainty relations.

Strong subadditivity for any two algebras that form a commuting square.
"""

__version__ = "0.1.0"
