import logging
import os
import threading
from typing import List, Mapping, Optional

import openai
from django.conf import settings

logger = logging.getLogger(__name__)


class LLMBackendError(RuntimeError):
    """Transport or API failure talking to the chat backend."""


class ChatClient:
    """
    Thin chat-completions client. Requests are bounded by a semaphore so a
    pool of agents answering in parallel never has more than
    ``max_in_flight`` calls open; retries with backoff are left to the SDK.
    """

    def __init__(self, base_url: Optional[str] = None, model: Optional[str] = None,
                 api_key: Optional[str] = None, max_in_flight: Optional[int] = None,
                 max_retries: Optional[int] = None, timeout: Optional[float] = None,
                 temperature: Optional[float] = None):
        conf = settings.MELE_LAB['LLM']
        self.base_url = base_url or conf['BASE_URL']
        self.model = model or conf['MODEL']
        self.temperature = conf['TEMPERATURE'] if temperature is None else temperature
        key = api_key or os.environ.get(conf['API_KEY_ENV'])
        if not key:
            raise LLMBackendError(
                f"no API key: set the {conf['API_KEY_ENV']} environment variable")
        self._client = openai.OpenAI(
            base_url=self.base_url,
            api_key=key,
            max_retries=conf['MAX_RETRIES'] if max_retries is None else max_retries,
            timeout=conf['TIMEOUT'] if timeout is None else timeout,
        )
        self._slots = threading.BoundedSemaphore(max_in_flight or conf['MAX_IN_FLIGHT'])

    @classmethod
    def from_config(cls, llm: Mapping) -> 'ChatClient':
        return cls(
            base_url=llm.get('base_url'),
            model=llm.get('model'),
            max_in_flight=llm.get('max_in_flight'),
            max_retries=llm.get('max_retries'),
            timeout=llm.get('timeout'),
            temperature=llm.get('temperature'),
        )

    def chat(self, messages: List[Mapping[str, str]]) -> str:
        with self._slots:
            try:
                response = self._client.chat.completions.create(
                    model=self.model,
                    messages=list(messages),
                    temperature=self.temperature,
                )
            except openai.OpenAIError as exc:
                logger.error("chat backend %s failed: %s", self.base_url, exc)
                raise LLMBackendError(str(exc)) from exc
        content = response.choices[0].message.content
        return content or ''
