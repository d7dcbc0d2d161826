"""
Test package for the double-RIS ISAC toolkit
"""
