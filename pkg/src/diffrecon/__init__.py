"""diffrecon - PET reconstruction with a fine-tuned diffusion prior."""

__version__ = "0.1.0"
