from rest_framework import serializers

from aggregation.debate import DEBATE_MODES
from environment.serializers import GenConfigSerializer
from exploration.explore_utils import POLICY_KINDS
from learners.registry import LEARNERS

AGGREGATION_METHODS = ('mv', 'debate', 'cam')
OBSERVATION_MODES = ('explore', 'oracle_partition')
ANSWER_BACKENDS = ('heuristic', 'llm')


class AgentSpecSerializer(serializers.Serializer):
    policy = serializers.ChoiceField(choices=POLICY_KINDS, required=False)
    policy_params = serializers.DictField(required=False)
    start = serializers.IntegerField(min_value=0, required=False, allow_null=True)
    backend = serializers.ChoiceField(choices=ANSWER_BACKENDS, required=False)
    malicious = serializers.BooleanField(required=False)
    rooms = serializers.ListField(child=serializers.IntegerField(min_value=0), required=False,
                                  allow_null=True)
    observations_file = serializers.CharField(required=False, allow_null=True)


class NoiseSerializer(serializers.Serializer):
    p_detect = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    p_false = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    seed = serializers.IntegerField(required=False)


class HeuristicSerializer(serializers.Serializer):
    threshold = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    flip_noise = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    seed = serializers.IntegerField(required=False)


class DebateSerializer(serializers.Serializer):
    rounds = serializers.IntegerField(min_value=0, required=False)
    stubbornness = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    mode = serializers.ChoiceField(choices=DEBATE_MODES, required=False)


class LlmSerializer(serializers.Serializer):
    base_url = serializers.URLField(required=False)
    model = serializers.CharField(required=False)
    max_in_flight = serializers.IntegerField(min_value=1, required=False)
    max_retries = serializers.IntegerField(min_value=0, required=False)
    timeout = serializers.FloatField(min_value=0.0, required=False)
    temperature = serializers.FloatField(min_value=0.0, max_value=2.0, required=False)


class ExperimentConfigSerializer(serializers.Serializer):
    """
    One experiment document. Every key is optional; ``ExperimentConfig``
    fills the gaps from ``settings.MELE_LAB``.
    """
    name = serializers.SlugField(required=False)
    house = GenConfigSerializer(required=False)
    house_file = serializers.CharField(required=False, allow_null=True)
    agents = AgentSpecSerializer(many=True, required=False, allow_empty=False)
    observations = serializers.ChoiceField(choices=OBSERVATION_MODES, required=False)
    steps = serializers.IntegerField(min_value=0, required=False)
    noise = NoiseSerializer(required=False)
    heuristic = HeuristicSerializer(required=False)
    methods = serializers.ListField(child=serializers.ChoiceField(choices=AGGREGATION_METHODS),
                                    required=False, allow_empty=False)
    cam_algos = serializers.ListField(child=serializers.ChoiceField(choices=list(LEARNERS)),
                                      required=False, allow_empty=False)
    cam_hyperparams = serializers.DictField(child=serializers.DictField(), required=False)
    debate = DebateSerializer(required=False)
    tie_break = serializers.ChoiceField(choices=[0, 1], required=False)
    test_fraction = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    seeds = serializers.ListField(child=serializers.IntegerField(min_value=0), required=False,
                                  allow_empty=False)
    query_seed = serializers.IntegerField(required=False)
    skip_saturated = serializers.BooleanField(required=False)
    n_jobs = serializers.IntegerField(min_value=1, required=False)
    output_dir = serializers.CharField(required=False)
    llm = LlmSerializer(required=False)

    def validate_seeds(self, value):
        if len(set(value)) != len(value):
            raise serializers.ValidationError("Seeds must be unique.")
        return value

    def validate_cam_hyperparams(self, value):
        unknown = [algo for algo in value if algo not in LEARNERS]
        if unknown:
            raise serializers.ValidationError(f"Unknown CAM algorithm '{unknown[0]}'.")
        return value

    def validate(self, data):
        if data.get('house') and data.get('house_file'):
            raise serializers.ValidationError("Give either 'house' or 'house_file', not both.")
        if data.get('observations') == 'oracle_partition':
            for agent in data.get('agents', []):
                if agent.get('observations_file'):
                    raise serializers.ValidationError(
                        "'observations_file' cannot be combined with oracle_partition.")
        return data


class TrialRunSerializer(serializers.Serializer):
    config = serializers.DictField(required=False, default=dict)
    seed = serializers.IntegerField(min_value=0, required=False, default=0)
