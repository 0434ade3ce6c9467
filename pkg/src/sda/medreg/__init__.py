"""Medical-records scenario: visit register, offline snapshots, sync, e-MRs."""
