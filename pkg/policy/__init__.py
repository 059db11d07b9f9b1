"""
Policy package: distributed execution rules for trained and baseline robots.
"""
