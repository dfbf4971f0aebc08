from rest_framework import serializers


class AnswerLineSerializer(serializers.Serializer):
    """One line of the answers file"""
    agent = serializers.IntegerField(min_value=0)
    query_index = serializers.IntegerField(min_value=0)
    answer = serializers.ChoiceField(choices=[0, 1])
