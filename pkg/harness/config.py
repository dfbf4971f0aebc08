"""
Experiment configuration.

An experiment is one JSON document. Keys left out fall back to
``settings.MELE_LAB`` and ``to_dict()`` writes every value back out, so the
report alone is enough to replay a run.
"""
import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from django.conf import settings

from .serializers import ExperimentConfigSerializer

# execution details that do not change results
_UNHASHED = ('n_jobs', 'output_dir')


class ConfigError(ValueError):
    pass


@dataclass
class AgentSpec:
    policy: str = 'greedy_novelty'
    policy_params: Dict = field(default_factory=dict)
    start: Optional[int] = None
    backend: str = 'heuristic'
    malicious: bool = False
    rooms: Optional[List[int]] = None
    observations_file: Optional[str] = None


def _defaults() -> dict:
    lab = settings.MELE_LAB
    harness = lab['HARNESS']
    house = lab['HOUSE']
    return {
        'name': 'experiment',
        'house': {
            'num_rooms': house['NUM_ROOMS'],
            'nodes_per_room': list(house['NODES_PER_ROOM']),
            'room_type_mix': list(house['ROOM_TYPE_MIX']),
            'extra_edge_prob': house['EXTRA_EDGE_PROB'],
            'seed': house['SEED'],
        },
        'house_file': None,
        'agents': [{}, {}, {}],
        'observations': harness['OBSERVATIONS'],
        'steps': lab['EXPLORATION']['STEPS'],
        'noise': {
            'p_detect': lab['NOISE']['P_DETECT'],
            'p_false': lab['NOISE']['P_FALSE'],
            'seed': lab['NOISE']['SEED'],
        },
        'heuristic': {
            'threshold': lab['HEURISTIC']['THRESHOLD'],
            'flip_noise': lab['HEURISTIC']['FLIP_NOISE'],
            'seed': lab['HEURISTIC']['SEED'],
        },
        'methods': list(lab['AGGREGATION']['METHODS']),
        'cam_algos': list(lab['CAM']['ALGOS']),
        'cam_hyperparams': copy.deepcopy(lab['CAM']['HYPERPARAMS']),
        'debate': {
            'rounds': lab['DEBATE']['ROUNDS'],
            'stubbornness': lab['DEBATE']['STUBBORNNESS'],
            'mode': lab['DEBATE']['MODE'],
        },
        'tie_break': lab['AGGREGATION']['TIE_BREAK'],
        'test_fraction': harness['TEST_FRACTION'],
        'seeds': list(harness['SEEDS']),
        'query_seed': harness['QUERY_SEED'],
        'skip_saturated': harness['SKIP_SATURATED'],
        'n_jobs': harness['N_JOBS'],
        'output_dir': harness['OUTPUT_DIR'],
        'llm': {
            'base_url': lab['LLM']['BASE_URL'],
            'model': lab['LLM']['MODEL'],
            'max_in_flight': lab['LLM']['MAX_IN_FLIGHT'],
            'max_retries': lab['LLM']['MAX_RETRIES'],
            'timeout': lab['LLM']['TIMEOUT'],
            'temperature': lab['LLM']['TEMPERATURE'],
        },
    }


def _plain(value):
    """Serializer output (OrderedDicts, tuples) as plain JSON types."""
    return json.loads(json.dumps(value))


@dataclass
class ExperimentConfig:
    name: str
    house: Dict
    house_file: Optional[str]
    agents: List[AgentSpec]
    observations: str
    steps: int
    noise: Dict
    heuristic: Dict
    methods: List[str]
    cam_algos: List[str]
    cam_hyperparams: Dict[str, Dict]
    debate: Dict
    tie_break: int
    test_fraction: float
    seeds: List[int]
    query_seed: int
    skip_saturated: bool
    n_jobs: int
    output_dir: str
    llm: Dict

    @classmethod
    def from_dict(cls, data: Optional[dict] = None) -> 'ExperimentConfig':
        serializer = ExperimentConfigSerializer(data=data or {})
        if not serializer.is_valid():
            raise ConfigError(f"invalid experiment config: {_plain(serializer.errors)}")
        given = _plain(serializer.validated_data)

        values = _defaults()
        for key in ('noise', 'heuristic', 'debate', 'llm'):
            values[key].update(given.pop(key, {}))
        if 'house' in given:
            values['house'].update(given.pop('house'))
        if given.get('house_file'):
            values['house'] = {}
        for algo, overrides in given.pop('cam_hyperparams', {}).items():
            values['cam_hyperparams'].setdefault(algo, {}).update(overrides)
        values.update(given)

        values['agents'] = [AgentSpec(**agent) for agent in values['agents']]
        return cls(**values)

    @classmethod
    def load(cls, path) -> 'ExperimentConfig':
        try:
            data = json.loads(Path(path).read_text(encoding='utf-8'))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> 'ExperimentConfig':
        data = self.to_dict()
        data.update(changes)
        data['agents'] = [AgentSpec(**a) if isinstance(a, dict) else a for a in data['agents']]
        return ExperimentConfig(**data)

    @property
    def config_hash(self) -> str:
        material = {k: v for k, v in self.to_dict().items() if k not in _UNHASHED}
        return hashlib.sha256(json.dumps(material, sort_keys=True).encode('utf-8')).hexdigest()

    @property
    def run_id(self) -> str:
        return f"{self.name}-{self.config_hash[:10]}"

    @property
    def cam_methods(self) -> List[str]:
        return [f'cam_{algo}' for algo in self.cam_algos] if 'cam' in self.methods else []

    @property
    def method_names(self) -> List[str]:
        """Result rows in report order: mv, debate, then one per CAM algorithm."""
        names = [m for m in ('mv', 'debate') if m in self.methods]
        return names + self.cam_methods

    def hyperparams(self, algo: str) -> dict:
        return dict(self.cam_hyperparams.get(algo, {}))
