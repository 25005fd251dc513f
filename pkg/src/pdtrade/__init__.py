"""Compression-driven decision trees and a long-only trailing-stop backtest pipeline."""

__version__ = "0.1.0"
