from rest_framework import status
from rest_framework.decorators import api_view
from rest_framework.response import Response

from environment.house_utils import GenConfig, GenConfigError, generate_house, house_to_dict
from environment.serializers import GenConfigSerializer
from melelab import prompts

from .config import ConfigError, ExperimentConfig
from .serializers import TrialRunSerializer
from .trial import TrialError, needs_client, run_trial


def _error(errors):
    return Response({'status': 'error', 'errors': errors}, status=status.HTTP_400_BAD_REQUEST)


@api_view(['POST'])
def generate_house_api(request):
    """
    POST: generate a house from generation parameters
    """
    serializer = GenConfigSerializer(data=request.data)
    if not serializer.is_valid():
        return _error(serializer.errors)
    try:
        house = generate_house(GenConfig.from_payload(serializer.validated_data))
    except GenConfigError as exc:
        return _error({'config': [str(exc)]})
    return Response({'status': 'ok', 'house': house_to_dict(house)})


@api_view(['GET'])
def prompt_catalog_api(request):
    return Response({'status': 'ok', 'prompts': prompts.catalog()})


@api_view(['POST'])
def run_trial_api(request):
    """
    POST: run one trial of an experiment config for one seed.
    Only backends that need no chat client are accepted here.
    """
    serializer = TrialRunSerializer(data=request.data)
    if not serializer.is_valid():
        return _error(serializer.errors)
    try:
        cfg = ExperimentConfig.from_dict(serializer.validated_data['config'])
        if needs_client(cfg, cfg.agents):
            return _error({'config': ['LLM backends are not available over the API.']})
        trial = run_trial(cfg, serializer.validated_data['seed'])
    except ConfigError as exc:
        return _error({'config': [str(exc)]})
    except TrialError as exc:
        return _error({exc.stage: [exc.detail]})
    return Response({'status': 'ok', 'run_id': cfg.run_id, 'trial': trial.to_dict()})
