"""Language-embedded 3D Gaussian registration, product quantization and 3D evaluation."""

__version__ = "0.1.0"
