"""
Pydantic models for games, utilities, learner runs and reports.
"""
