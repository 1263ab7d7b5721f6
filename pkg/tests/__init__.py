"""
Test package for the Dynamic Prior toolkit
"""
