import pytest

from reldata.corpus import Origin, RelevanceRecord, Task, make_record
from reldata.errors import ProviderError
from reldata.providers import MockTranslator, TranslationRequest


def mk(
    query: str,
    candidate: str,
    label: int,
    task: Task = Task.QC,
    language: str = "en",
    **kwargs,
) -> RelevanceRecord:
    return make_record(
        task=task, query=query, language=language, candidate=candidate, label=label, **kwargs
    )


class FlakyTranslator:
    """Fails deterministically on texts containing the poison marker."""

    def __init__(self, poison: str = "POISON") -> None:
        self.poison = poison
        self.inner = MockTranslator()
        self.calls = 0

    def translate(self, request: TranslationRequest) -> str:
        self.calls += 1
        if self.poison in request.text:
            raise ProviderError("simulated translation outage")
        return self.inner.translate(request)


class FixedScorer:
    """Returns log-scores that normalize to a preset p_yes per query."""

    def __init__(self, p_by_query: dict[str, float], default: float = 0.5) -> None:
        self.p_by_query = p_by_query
        self.default = default

    def score(self, task, query, candidate, language):
        import math

        from reldata.providers import ScorePair

        p = self.p_by_query.get(query, self.default)
        p = min(max(p, 1e-9), 1 - 1e-9)
        return ScorePair(logp_yes=math.log(p), logp_no=math.log(1 - p))


class FailingScorer:
    """Raises on queries containing the poison marker, else delegates."""

    def __init__(self, inner, poison: str = "POISON") -> None:
        self.inner = inner
        self.poison = poison

    def score(self, task, query, candidate, language):
        if self.poison in query:
            raise ProviderError("simulated scoring outage")
        return self.inner.score(task, query, candidate, language)


@pytest.fixture
def translator():
    return MockTranslator()
