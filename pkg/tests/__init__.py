# Test package for the NRPS simulation lab
