"""
``vessel-transfer evaluate``: ``acc sen spe auc`` of probability maps against masks.
"""

import os

from .. import metrics
from ..command import Command
from ..errors import ConfigurationError
from ..imgio import DatasetRegistry, Domain, MaskImage, load_image


def _load_mask(path):
    return MaskImage.from_unit(load_image(path, "pgm"))


class Evaluate(Command):
    """Score probability maps (or a second observer's masks) against ground truth."""

    def define_arguments(self, parser):
        self.define_common_arguments(parser, output_default="plain")
        parser.add_argument("--pred", help="Probability map or binary mask (PGM)")
        parser.add_argument("--truth", help="Ground-truth mask (PGM)")
        parser.add_argument("--roi", help="Field-of-view mask restricting evaluated pixels")
        parser.add_argument("--pred-dir", dest="pred_dir", help="Directory of <id>.pgm predictions")
        parser.add_argument("--data-root", dest="data_root", help="Registry with the target masks")
        parser.add_argument("--threshold", type=float, help="Decision threshold")
        return parser

    def execute(self, args):
        threshold = 0.5 if args.threshold is None else args.threshold
        if not 0.0 <= threshold <= 1.0:
            raise ConfigurationError(f"--threshold must lie in [0, 1], got {threshold}", exit_code=2)
        roi = _load_mask(args.roi) if args.roi else None

        if args.pred or args.truth:
            if not (args.pred and args.truth) or args.pred_dir:
                raise ConfigurationError("use --pred with --truth, or --pred-dir with --data-root", exit_code=2)
            triples = [(load_image(args.pred, "pgm"), _load_mask(args.truth), roi)]
        else:
            if not (args.pred_dir and args.data_root):
                raise ConfigurationError("use --pred with --truth, or --pred-dir with --data-root", exit_code=2)
            triples = []
            for record in DatasetRegistry(args.data_root).records(Domain.TARGET):
                path = os.path.join(args.pred_dir, f"{record.id}.pgm")
                if not os.path.exists(path):
                    self.log.warning("No prediction for %s", record.id)
                    continue
                triples.append((load_image(path, "pgm"), record.mask, roi))
            self.log.info("Evaluating %d images", len(triples))

        scores, labels = metrics.pool_pixels(triples)
        row = metrics.evaluate_pixels(scores, labels, threshold)
        self.output(args).print_records([row], columns=["acc", "sen", "spe", "auc"])
        return 0
