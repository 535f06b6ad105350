"""Multiple Block Convolutional Highways with improved word vectors, on a small numpy autodiff core."""

__version__ = "0.1.0"
