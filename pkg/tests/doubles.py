"""Scripted provider doubles for exercising failure and consensus paths."""

from __future__ import annotations

from dreamforge.errors import ProviderError


class ScriptedLLM:
    """Returns canned responses in call order; pads with the last entry."""

    transport = "inproc"

    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = 0

    def complete(self, prompt: str, seed: int) -> str:
        index = min(self.calls, len(self.responses) - 1)
        self.calls += 1
        return self.responses[index]


class FlakyLLM:
    """Raises on selected call indices (0-based), otherwise delegates."""

    transport = "inproc"

    def __init__(self, inner, fail_on=()):
        self.inner = inner
        self.fail_on = set(fail_on)
        self.calls = 0

    def complete(self, prompt: str, seed: int) -> str:
        index = self.calls
        self.calls += 1
        if index in self.fail_on:
            raise ProviderError("scripted transport failure", retryable=True)
        return self.inner.complete(prompt, seed)


class EmptyMaskGen:
    transport = "inproc"

    def propose(self, image_uri, bbox):
        return []


class RejectingLayoutToImage:
    transport = "inproc"

    def generate(self, layout, seed):
        raise ProviderError("scripted generation rejection", retryable=False)


class FlakyLayoutToImage:
    """Rejects selected call indices (0-based), otherwise delegates."""

    transport = "inproc"

    def __init__(self, inner, fail_on=()):
        self.inner = inner
        self.fail_on = set(fail_on)
        self.calls = 0

    def generate(self, layout, seed):
        index = self.calls
        self.calls += 1
        if index in self.fail_on:
            raise ProviderError("scripted generation rejection", retryable=False)
        return self.inner.generate(layout, seed)
