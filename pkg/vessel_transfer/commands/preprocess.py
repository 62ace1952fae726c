"""
``vessel-transfer preprocess``: green channel, normalisation, CLAHE and gamma.
"""

import os

from ..command import Command
from ..errors import ConfigurationError
from ..imgio import DatasetRegistry, load_image, save_image
from ..preprocess import preprocess_chain
from ._options import add_preprocess_arguments, preprocess_config


class Preprocess(Command):
    """Run the preprocessing chain on one image or a whole registry."""

    def define_arguments(self, parser):
        super().define_arguments(parser)
        parser.add_argument("--input", help="Single PGM/PPM image")
        parser.add_argument("--output-image", dest="output_image", help="Where to write the processed image")
        parser.add_argument("--data-root", dest="data_root", help="Registry to process")
        parser.add_argument("--out-root", dest="out_root", help="Registry to write")
        add_preprocess_arguments(parser)
        return parser

    def execute(self, args):
        cfg = preprocess_config(args)
        single = args.input is not None or args.output_image is not None
        batch = args.data_root is not None or args.out_root is not None
        if single == batch:
            raise ConfigurationError(
                "give either --input/--output-image or --data-root/--out-root", exit_code=2
            )

        if single:
            if not (args.input and args.output_image):
                raise ConfigurationError("--input and --output-image go together", exit_code=2)
            save_image(args.output_image, preprocess_chain(load_image(args.input), cfg))
            self.log.info("Wrote %s", args.output_image)
            return 0

        if not (args.data_root and args.out_root):
            raise ConfigurationError("--data-root and --out-root go together", exit_code=2)
        if os.path.abspath(args.data_root) == os.path.abspath(args.out_root):
            raise ConfigurationError("--out-root must differ from --data-root", exit_code=2)
        source = DatasetRegistry(args.data_root)
        target = DatasetRegistry(args.out_root)
        rows = []
        for entry in source.entries():
            record = source.load(entry)
            processed = preprocess_chain(record.image, cfg)
            target.add(entry, processed, record.mask)
            rows.append({"id": entry.id, "dataset": entry.dataset_name, "mean": float(processed.pixels.mean())})
        self.log.info("Preprocessed %d images into %s", len(rows), args.out_root)
        self.output(args).print_records(rows)
        return 0
