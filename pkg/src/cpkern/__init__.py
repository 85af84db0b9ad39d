"""Iterated CP maps on operator-valued kernels."""
