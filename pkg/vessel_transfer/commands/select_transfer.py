"""
``vessel-transfer select-transfer``: rank and accept source images with a trained model.
"""

from .. import drunet, transfer
from ..command import Command
from ..imgio import DatasetRegistry, Domain
from ._options import add_transfer_arguments, require, transfer_config


class SelectTransfer(Command):
    """Cluster image latents and vote on which source images to transfer."""

    def define_arguments(self, parser):
        super().define_arguments(parser)
        parser.add_argument("--data-root", dest="data_root", required=True, help="Preprocessed registry")
        parser.add_argument("--checkpoint", required=True, help="Trained checkpoint")
        parser.add_argument("--out", required=True, help="Selection TSV to write")
        parser.add_argument("--stride", type=int, help="Latent grid stride")
        parser.add_argument("--ib-lambda", dest="ib_lambda", type=float, help="Log the IB diagnostic with this lambda")
        parser.add_argument("--mi-bins", dest="mi_bins", type=int, help="Histogram bins for the IB diagnostic")
        add_transfer_arguments(parser)
        return parser

    def execute(self, args):
        require(args, "seed")
        model = drunet.load_checkpoint(args.checkpoint)
        registry = DatasetRegistry(args.data_root)
        targets = registry.records(Domain.TARGET)
        sources = registry.records(Domain.SOURCE)

        selection, _ = transfer.select_sources(model, targets, sources, transfer_config(args), args.seed)
        transfer.write_selection(selection, args.out)
        self.log.info("Wrote selection %s", args.out)

        if args.ib_lambda is not None and targets:
            self._log_ib_report(args, model, targets)

        out = self.output(args)
        out.print_records(
            list(selection.records),
            columns=["sample_id", "dataset_name", "vote_fraction", "mean_distance_to_target", "accepted"],
            table_options={"headers": {"mean_distance_to_target": "distance", "dataset_name": "dataset"}},
        )
        if args.output == "table" and selection.records:
            out.print_records(selection.by_dataset())
        return 0

    def _log_ib_report(self, args, model, targets):
        bins = args.mi_bins or 16
        pairs = transfer.training_pairs(targets, model.spec.patch, drunet.TrainConfig(seed=args.seed))
        if len(pairs) < bins:
            self.log.warning("Only %d patches for %d MI bins; skipping the IB diagnostic", len(pairs), bins)
            return
        report = transfer.ib_report_for_model(model, pairs, args.ib_lambda, bins)
        self.log.info(
            "IB diagnostic: I(x;z)=%.4f I(z;y)=%.4f H(y)=%.4f lambda=%.3g L=%.4f",
            report.i_xz,
            report.i_zy,
            report.h_y,
            report.lam,
            report.lagrangian,
        )
