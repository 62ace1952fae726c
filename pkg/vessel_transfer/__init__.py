"""
vessel-transfer - retinal vessel segmentation with selective transfer learning.

Provides image I/O, fundus preprocessing, patch handling, a numpy
dimensionality-reduced U-Net, latent-space transfer selection, segmentation
metrics, and the ``vessel-transfer`` command-line tool.
"""

from . import cli, drunet, imgio, metrics, patchwork, preprocess, tensor_engine, transfer

__all__ = [
    "cli",
    "drunet",
    "imgio",
    "main",
    "metrics",
    "patchwork",
    "preprocess",
    "tensor_engine",
    "transfer",
]

main = cli.make_main(
    package="vessel_transfer",
    prog="vessel-transfer",
    description="Retinal vessel segmentation with selective transfer learning",
)
