# Latent Geodesics
__version__ = "0.1.0"
