"""Stratified L-infinity differential forms: exact polynomial forms, cochains and their checks"""
__version__ = "1.0.0"
