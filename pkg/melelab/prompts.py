"""
Prompt catalog.

Every string sent to a chat backend lives here. The answering, debate and
exploration system prompts are kept byte-exact to the published protocol;
only the exploration user prompt and the reprompts are ours.
"""

# Question answering
ANSWER_SYSTEM_PROMPT = (
    "You are an embodied agent that has explored a house. I prefer definite "
    "answers to questions. The observations are: {observations}"
)

QUESTION_TEMPLATE = (
    "Do you think there is a {item} in the {room}? Use both common-sense "
    "reasoning about the object and room and the observation list given. Even "
    "if the relevant information is not in your observations, the answer can "
    "still be YES. Respond with YES or NO."
)

ANSWER_REPROMPT = "Respond with YES or NO only."

# Debate
DEBATE_SYSTEM_PROMPT = (
    "You are an embodied agent in a house. Your id is {index}. Here are your "
    "observations from exploring the house: {observations}.  Your initial "
    "answer to whether or not there was a {object} in the {room} was "
    "{initial_answer}. Other agents may have different answers. Please debate "
    "with the other agents to come to a consensus. {history}"
)

DEBATE_HISTORY = "Here is the conversation history: {conversation}"

DEBATE_NO_HISTORY = "This is the beginning of the conversation."

DEBATE_TURN_PROMPT = (
    "It is your turn to speak. Use your observation and conversation history "
    "to help."
)

DEBATE_FINAL_PROMPT = 'Please give your final "Yes/No" answer. Give a definite answer.'

# Exploration
EXPLORATION_SYSTEM_PROMPT = (
    "You are an embodied agent in a house. You want to aggressively explore "
    "the house and you want to find as many unique objects as you can."
)

EXPLORATION_USER_TEMPLATE = (
    "You are in the {current_room}. So far you have observed: {observations}. "
    "From here you can move to one of these rooms: {choices}. "
    "Which room do you move to next? Answer with the room name only."
)

EXPLORATION_REPROMPT = "Answer with exactly one of these room names: {choices}."


def answer_word(answer):
    """Render a 0/1 answer the way the prompts phrase it."""
    return "YES" if answer else "NO"


def catalog():
    """All prompt strings by name, for the REST surface and transcripts."""
    return {
        name: value
        for name, value in globals().items()
        if name.isupper() and isinstance(value, str)
    }
