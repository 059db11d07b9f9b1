"""
Swarm world package: the seedable task-allocation environment.
"""
