"""
``vessel-transfer predict``: full-image probability maps from a checkpoint.
"""

import os

from .. import drunet
from ..command import Command
from ..errors import ConfigurationError
from ..imgio import DatasetRegistry, Domain, as_gray, load_image, save_image


class Predict(Command):
    """Stitch per-patch probabilities into full-image PGM maps."""

    def define_arguments(self, parser):
        super().define_arguments(parser)
        parser.add_argument("--checkpoint", required=True, help="Trained checkpoint")
        parser.add_argument("--input", help="Single preprocessed image")
        parser.add_argument("--output-image", dest="output_image", help="Probability map to write")
        parser.add_argument("--data-root", dest="data_root", help="Predict every target image of a registry")
        parser.add_argument("--out-dir", dest="out_dir", help="Directory for <id>.pgm maps")
        parser.add_argument("--stride", type=int, help="Prediction grid stride")
        return parser

    def execute(self, args):
        model = drunet.load_checkpoint(args.checkpoint)
        stride = args.stride or max(1, model.spec.patch // 2)

        if args.input or args.output_image:
            if not (args.input and args.output_image) or args.data_root:
                raise ConfigurationError("use --input with --output-image, or --data-root with --out-dir", exit_code=2)
            prob = drunet.predict_image(model, as_gray(load_image(args.input)), stride)
            save_image(args.output_image, prob)
            self.log.info("Wrote %s", args.output_image)
            return 0

        if not (args.data_root and args.out_dir):
            raise ConfigurationError("use --input with --output-image, or --data-root with --out-dir", exit_code=2)
        rows = []
        for record in DatasetRegistry(args.data_root).records(Domain.TARGET):
            path = os.path.join(args.out_dir, f"{record.id}.pgm")
            prob = drunet.predict_image(model, record.image, stride)
            save_image(path, prob)
            rows.append({"id": record.id, "path": path, "mean_probability": float(prob.pixels.mean())})
        self.log.info("Wrote %d probability maps to %s", len(rows), args.out_dir)
        self.output(args).print_records(rows)
        return 0
