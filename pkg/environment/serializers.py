from rest_framework import serializers

from .house_utils import ROOM_TYPES


class RoomSerializer(serializers.Serializer):
    name = serializers.CharField()
    type = serializers.CharField()


class HouseFileSerializer(serializers.Serializer):
    """
    Shape check for house files; graph invariants are left to validate_house
    """
    nodes = serializers.ListField(child=serializers.IntegerField(min_value=0), allow_empty=False)
    edges = serializers.ListField(
        child=serializers.ListField(child=serializers.IntegerField(min_value=0),
                                    min_length=2, max_length=2),
    )
    node_room = serializers.DictField(child=serializers.IntegerField(min_value=0))
    rooms = serializers.DictField(child=RoomSerializer())
    placements = serializers.DictField(child=serializers.ListField(child=serializers.CharField()))
    object_catalog = serializers.DictField(child=serializers.IntegerField(min_value=0))
    seed = serializers.IntegerField(allow_null=True, required=False, default=None)


class GenConfigSerializer(serializers.Serializer):
    """
    House generation parameters as they appear in experiment configs and
    the generate endpoint
    """
    num_rooms = serializers.IntegerField(min_value=1, required=False)
    nodes_per_room = serializers.ListField(
        child=serializers.IntegerField(min_value=1), min_length=2, max_length=2, required=False)
    room_type_mix = serializers.ListField(
        child=serializers.CharField(), allow_empty=False, required=False)
    extra_edge_prob = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    default_prior = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    uniform_prior = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    objects = serializers.ListField(child=serializers.CharField(), required=False)
    num_objects = serializers.IntegerField(min_value=1, required=False)
    seed = serializers.IntegerField(required=False)

    def validate_nodes_per_room(self, value):
        if value[1] < value[0]:
            raise serializers.ValidationError("Upper bound must not be below the lower bound.")
        return value

    def validate_room_type_mix(self, value):
        unknown = [t for t in value if t not in ROOM_TYPES]
        if unknown:
            raise serializers.ValidationError(
                f"Unknown room type '{unknown[0]}'. Expected one of: {', '.join(ROOM_TYPES)}")
        return value
