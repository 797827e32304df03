"""
Service layer: game core, occupancies, utilities, gradients, learner and diagnostics.
"""
