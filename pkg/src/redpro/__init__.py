"""Image restoration with denoisers as fixed-point priors (RED-PRO, PnP, RED)."""

__version__ = "0.1.0"
