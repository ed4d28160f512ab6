"""
Machine learning layer: the recurrent inverse-dynamics network, its
configuration and the Rprop optimizer.
"""

__version__ = "1.0.0"
