"""
``vessel-transfer synth``: write synthetic vessel images into a registry.
"""

from ..command import Command
from ..errors import ConfigurationError
from ..imgio import DatasetRegistry, Domain, ManifestEntry, PictureLabel, Style, synth_vessels


class Synth(Command):
    """Generate synthetic fundus-like or neuron-like images with masks."""

    def define_arguments(self, parser):
        super().define_arguments(parser)
        parser.add_argument("--out", required=True, help="Registry directory to write into")
        parser.add_argument("--count", type=int, default=4, help="Number of images")
        parser.add_argument("--width", type=int, default=64, help="Image width")
        parser.add_argument("--height", type=int, default=64, help="Image height")
        parser.add_argument(
            "--style", choices=[s.value for s in Style], default=Style.RETINA.value, help="Image style"
        )
        parser.add_argument(
            "--domain", choices=[d.value for d in Domain], default=Domain.TARGET.value, help="Domain"
        )
        parser.add_argument("--dataset", help="Dataset name (default synth-<style>)")
        parser.add_argument(
            "--label", choices=[p.value for p in PictureLabel], help="Picture-level label of source images"
        )
        parser.add_argument("--no-masks", action="store_true", help="Do not write masks (source only)")
        return parser

    def execute(self, args):
        if args.count < 1:
            raise ConfigurationError(f"--count must be >= 1, got {args.count}", exit_code=2)
        domain = Domain(args.domain)
        if domain is Domain.TARGET and (args.no_masks or args.label):
            raise ConfigurationError("target images need masks and take no picture label", exit_code=2)

        registry = DatasetRegistry(args.out)
        dataset = args.dataset or f"synth-{args.style}"
        seed = args.seed or 0
        rows = []
        for i in range(args.count):
            image, mask = synth_vessels(seed + i, args.width, args.height, args.style)
            entry = ManifestEntry(
                id=f"{dataset}-{seed + i:04d}",
                domain=domain,
                dataset_name=dataset,
                picture_label=PictureLabel(args.label) if args.label else None,
            )
            registry.add(entry, image, None if args.no_masks else mask)
            rows.append(
                {
                    "id": entry.id,
                    "dataset": dataset,
                    "domain": domain.value,
                    "vessel_fraction": float(mask.pixels.mean()),
                }
            )
        self.log.info("Wrote %d %s images to %s", args.count, args.style, args.out)
        self.output(args).print_records(rows)
        return 0
