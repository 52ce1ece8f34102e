"""
docsolve - distributed-order fractional optimal control toolkit
"""

__version__ = "1.0.0"
