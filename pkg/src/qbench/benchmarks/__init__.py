"""Benchmarking protocols: RB/IRB, deterministic benchmarking, DFE, PFE and XEB."""
