from rest_framework import serializers


class QueryLineSerializer(serializers.Serializer):
    """One line of the query dataset file"""
    object = serializers.CharField()
    room = serializers.CharField()
    label = serializers.ChoiceField(choices=[0, 1])


class SplitSerializer(serializers.Serializer):
    """Split sidecar; the train side is the complement of ``test_indices``"""
    seed = serializers.IntegerField()
    test_indices = serializers.ListField(child=serializers.IntegerField(min_value=0),
                                         allow_empty=False)

    def validate_test_indices(self, value):
        size = self.context.get('size')
        if size is not None:
            out_of_range = [i for i in value if i >= size]
            if out_of_range:
                raise serializers.ValidationError(
                    f"Index {out_of_range[0]} is outside a query set of {size}.")
            if len(set(value)) >= size:
                raise serializers.ValidationError("Split leaves no training queries.")
        if len(set(value)) != len(value):
            raise serializers.ValidationError("Test indices repeat.")
        return value
