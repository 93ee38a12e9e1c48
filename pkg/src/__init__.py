"""
Structural ETKF Toolkit - ensemble transform Kalman filtering with
gradient-based weighting for shock-dominated 2D conservation laws
"""

__version__ = "1.0.0"
