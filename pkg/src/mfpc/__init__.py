"""Multiple flat projections clustering and flat-type baselines."""
