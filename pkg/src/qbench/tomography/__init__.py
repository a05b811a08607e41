"""Channel reconstruction: SQPT, separable AAPT, DCQD and single-qubit GST."""
