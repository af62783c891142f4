"""Extreme values of the Gaussian free field on regular trees and random regular graphs."""

__version__ = "0.1.0"
