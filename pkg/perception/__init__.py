"""
Perception graph and local information aggregation.
"""
