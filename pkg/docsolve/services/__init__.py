"""
Numerical services
"""
