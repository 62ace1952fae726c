"""
``vessel-transfer train``: train the network, optionally with selective transfer.
"""

from .. import drunet, transfer
from ..command import Command
from ..errors import ConfigurationError
from ..imgio import DatasetRegistry, Domain
from ._options import (
    add_network_arguments,
    add_patch_arguments,
    add_training_arguments,
    add_transfer_arguments,
    network_spec,
    require,
    train_config,
    transfer_config,
)


class Train(Command):
    """Train on a preprocessed registry and write a checkpoint."""

    def define_arguments(self, parser):
        super().define_arguments(parser)
        parser.add_argument("--data-root", dest="data_root", required=True, help="Preprocessed registry")
        parser.add_argument("--checkpoint", required=True, help="Checkpoint file to write")
        parser.add_argument("--rounds", type=int, help="Feature-learning/transfer rounds")
        parser.add_argument(
            "--transfer-mode",
            dest="transfer_mode",
            choices=[m.value for m in transfer.TransferMode],
            help="selective (cluster vote), union (all masked sources) or none",
        )
        parser.add_argument("--selection-out", dest="selection_out", help="Write the final selection TSV here")
        add_patch_arguments(parser)
        add_network_arguments(parser)
        add_training_arguments(parser)
        add_transfer_arguments(parser)
        return parser

    def execute(self, args):
        require(args, "rounds", "transfer_mode")
        if args.rounds < 1:
            raise ConfigurationError(f"--rounds must be >= 1, got {args.rounds}", exit_code=2)
        spec = network_spec(args)
        train_cfg = train_config(args)
        transfer_cfg = transfer_config(args, args.transfer_mode)

        registry = DatasetRegistry(args.data_root)
        targets = registry.records(Domain.TARGET)
        sources = registry.records(Domain.SOURCE)
        if not targets:
            raise ConfigurationError(f"registry {args.data_root} has no target images")
        self.log.info("Training on %d target images with %d candidate sources", len(targets), len(sources))

        result = transfer.two_stage_loop(targets, sources, spec, train_cfg, args.rounds, transfer_cfg)
        drunet.save_checkpoint(result.model, args.checkpoint)
        if args.selection_out:
            transfer.write_selection(result.final_selection, args.selection_out)
            self.log.info("Wrote selection %s", args.selection_out)

        rows = [
            {
                "round": i,
                "sources_accepted": len(selection.accepted_ids()),
                "first_loss": history[0],
                "final_loss": history[-1],
            }
            for i, (selection, history) in enumerate(zip(result.selections, result.histories), start=1)
        ]
        self.output(args).print_records(rows)
        return 0
