"""
dscca command line interface
"""
