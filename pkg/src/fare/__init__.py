"""Fair active learning with randomized exploration and group-balanced sampling."""

__version__ = "0.1.0"
