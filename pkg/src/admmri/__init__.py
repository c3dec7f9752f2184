"""ADMM reconstruction for Cartesian dynamic parallel MRI."""
