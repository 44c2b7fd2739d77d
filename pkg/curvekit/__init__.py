"""Yield-curve estimation from bond prices and the experiments that compare estimators."""
