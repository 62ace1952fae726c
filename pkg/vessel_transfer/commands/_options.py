"""
Flag groups shared by several subcommands and their conversion into the
library's config objects.

Flags carry no argparse defaults of their own; the runner installs the
shipped (and ``--config``) values as parser defaults.
"""

import contextlib

from ..drunet import NetworkSpec, TrainConfig
from ..errors import ConfigurationError
from ..preprocess import ClaheConfig, PreprocessConfig, parse_tiles
from ..tensor_engine import AdamConfig
from ..transfer import TransferConfig, TransferMode


def add_preprocess_arguments(parser):
    group = parser.add_argument_group("preprocessing")
    group.add_argument("--gamma", type=float, help="Gamma exponent")
    group.add_argument("--clip-limit", dest="clip_limit", type=float, help="CLAHE clip limit")
    group.add_argument("--tiles", help="CLAHE tile grid, e.g. 8x8")
    group.add_argument("--bins", type=int, help="CLAHE histogram bins")


def add_patch_arguments(parser):
    group = parser.add_argument_group("patches")
    group.add_argument("--patch-size", dest="patch_size", type=int, help="Patch side in pixels")
    group.add_argument("--stride", type=int, help="Prediction/latent grid stride")


def add_network_arguments(parser):
    group = parser.add_argument_group("network")
    group.add_argument("--depth", type=int, help="Pooling stages")
    group.add_argument("--base-channels", dest="base_channels", type=int, help="First-stage channels")
    group.add_argument("--latent-dim", dest="latent_dim", type=int, help="Latent dimension")


def add_training_arguments(parser):
    group = parser.add_argument_group("training")
    group.add_argument("--epochs", type=int, help="Epochs per round")
    group.add_argument("--batch", type=int, help="Patches per Adam step")
    group.add_argument(
        "--patches-per-image", dest="patches_per_image", type=int, help="Random patches per image"
    )
    group.add_argument("--lr", type=float, help="Adam learning rate")
    group.add_argument("--beta1", type=float, help="Adam beta1")
    group.add_argument("--beta2", type=float, help="Adam beta2")
    group.add_argument("--eps", type=float, help="Adam epsilon")


def add_transfer_arguments(parser):
    group = parser.add_argument_group("transfer")
    group.add_argument("--clusters", type=int, help="K-Means clusters")
    group.add_argument("--max-iter", dest="max_iter", type=int, help="K-Means iteration cap")
    group.add_argument("--tol", type=float, help="K-Means convergence tolerance")
    group.add_argument(
        "--vote-threshold", dest="vote_threshold", type=float, help="Minimum vote fraction to accept a source"
    )


def require(args, *names):
    """Raise ConfigurationError for any option that is still unset."""
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise ConfigurationError(f"missing value for {flags}", exit_code=2)


@contextlib.contextmanager
def _flag_values():
    """Report out-of-range flag values as usage errors."""
    try:
        yield
    except ConfigurationError as e:
        raise ConfigurationError(e.message, exit_code=2) from e


def preprocess_config(args) -> PreprocessConfig:
    require(args, "gamma", "clip_limit", "tiles", "bins")
    with _flag_values():
        tiles_x, tiles_y = parse_tiles(args.tiles)
        return PreprocessConfig(
            gamma=args.gamma,
            clahe=ClaheConfig(tiles_x=tiles_x, tiles_y=tiles_y, clip_limit=args.clip_limit, bins=args.bins),
        )


def network_spec(args) -> NetworkSpec:
    require(args, "depth", "base_channels", "latent_dim", "patch_size", "seed")
    with _flag_values():
        return NetworkSpec(
            depth=args.depth,
            base_channels=args.base_channels,
            latent_dim=args.latent_dim,
            patch=args.patch_size,
            seed=args.seed,
        )


def train_config(args) -> TrainConfig:
    require(args, "epochs", "batch", "patches_per_image", "lr", "beta1", "beta2", "eps", "seed")
    with _flag_values():
        return TrainConfig(
            epochs=args.epochs,
            batch=args.batch,
            patches_per_image=args.patches_per_image,
            adam=AdamConfig(lr=args.lr, beta1=args.beta1, beta2=args.beta2, eps=args.eps),
            seed=args.seed,
        )


def transfer_config(args, mode=TransferMode.SELECTIVE) -> TransferConfig:
    require(args, "clusters", "max_iter", "tol", "vote_threshold")
    try:
        mode = TransferMode(mode)
    except ValueError as e:
        raise ConfigurationError(f"unknown transfer mode {mode!r}", exit_code=2) from e
    with _flag_values():
        return TransferConfig(
            mode=mode,
            clusters=args.clusters,
            max_iter=args.max_iter,
            tol=args.tol,
            vote_threshold=args.vote_threshold,
            stride=getattr(args, "stride", None),
        )
