"""NRPS simulation lab."""
