"""Optimal multiple testing for a population and two subpopulations via sparse LP."""

__version__ = "0.1.0"
