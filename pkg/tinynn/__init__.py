"""
A small numpy MLP stack with analytic gradients.
"""
