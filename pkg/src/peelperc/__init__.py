"""Peeling process on the UIPQ and percolation exploration chains."""
