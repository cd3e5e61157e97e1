"""Label super-resolution: refine weak audio labels with a KDE, then train a CNN on them."""

__version__ = "0.1.0"
