"""
Helpers: random streams, banded solves, schema checks, resources, logging
"""
