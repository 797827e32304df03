"""
Command modules for the GUMG command-line interface.
"""
