"""
Experiment harness: scenarios, metrics, batch evaluation and result artifacts.
"""
