"""Critical bond percolation on Z^2: incipient-infinite-cluster
approximants, multiscale coverings, deep-patch backbones, conformal
weights and random-walk escape statistics."""

__version__ = "0.1.0"

from .lattice import BoxRegion, PercolationSample, RootedCluster, iic_approximant, sample_bond_config
from .seeding import derive_seed

__all__ = [
    "BoxRegion",
    "PercolationSample",
    "RootedCluster",
    "derive_seed",
    "iic_approximant",
    "sample_bond_config",
    "__version__",
]
