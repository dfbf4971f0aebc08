from environment.house_utils import GenConfig, generate_house, save_house
from environment.serializers import GenConfigSerializer

from ...config import ConfigError
from ..base import LabCommand


class Command(LabCommand):
    help = 'Generate a synthetic house and write house.json (--seed seeds the layout)'

    def add_lab_arguments(self, parser):
        parser.add_argument('--rooms', type=int, help='Number of rooms')
        parser.add_argument('--nodes-per-room', type=int, nargs=2, metavar=('MIN', 'MAX'))
        parser.add_argument('--uniform-prior', type=float,
                            help='Place every object with this probability in every room')

    def run(self, cfg, out, seed, options):
        payload = dict(cfg.house)
        overrides = {
            'num_rooms': options['rooms'],
            'nodes_per_room': options['nodes_per_room'],
            'uniform_prior': options['uniform_prior'],
            'seed': seed,
        }
        payload.update({k: v for k, v in overrides.items() if v is not None})
        serializer = GenConfigSerializer(data=payload)
        if not serializer.is_valid():
            raise ConfigError(f"invalid house parameters: {dict(serializer.errors)}")

        house = generate_house(GenConfig.from_payload(serializer.validated_data))
        path = save_house(house, out / 'house.json')
        self.success(f"{len(house.rooms)} rooms, {len(house.nodes)} nodes, "
                     f"{house.num_placements} placements -> {path}")
