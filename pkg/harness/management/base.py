from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from environment.house_utils import HouseGraph, load_house

from ..config import ConfigError, ExperimentConfig
from ..trial import TrialError, build_house

# every lab error derives from one of these
LAB_ERRORS = (ConfigError, TrialError, ValueError, KeyError, RuntimeError, OSError)


class LabCommand(BaseCommand):
    """
    Shared flags for every lab command: ``--seed``, ``--config`` and
    ``--out``. Subclasses add their own flags in ``add_lab_arguments`` and
    do their work in ``run``.
    """

    def add_arguments(self, parser):
        parser.add_argument('--seed', type=int, default=None,
                            help='Seed override; each command documents what it seeds')
        parser.add_argument('--config', default=None,
                            help='Experiment config JSON; settings.MELE_LAB fills the gaps')
        parser.add_argument('--out', default=None,
                            help='Output directory (default: the config output_dir)')
        self.add_lab_arguments(parser)

    def add_lab_arguments(self, parser):
        pass

    def handle(self, *args, **options):
        try:
            if options['config']:
                cfg = ExperimentConfig.load(options['config'])
            else:
                cfg = ExperimentConfig.from_dict({})
            out = Path(options['out'] or cfg.output_dir)
            self.run(cfg, out, options['seed'], options)
        except LAB_ERRORS as exc:
            raise CommandError(str(exc)) from exc

    def run(self, cfg: ExperimentConfig, out: Path, seed, options) -> None:
        raise NotImplementedError

    def house_from(self, cfg: ExperimentConfig, path=None) -> HouseGraph:
        return load_house(path) if path else build_house(cfg)

    def success(self, message: str) -> None:
        self.stdout.write(self.style.SUCCESS(message))
