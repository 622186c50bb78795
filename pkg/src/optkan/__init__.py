"""Option pricing with closed-form, Monte Carlo, recurrent and KAN models."""
__version__ = "0.1.0"
