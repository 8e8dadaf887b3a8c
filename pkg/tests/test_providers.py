import math
import unicodedata

import numpy as np
import pytest

from reldata.corpus import Task
from reldata.errors import ConfigError, ProviderError
from reldata.providers import (
    MOCK_EMBED_DIM,
    MockEmbedder,
    MockScorer,
    MockTranslator,
    ProviderSettings,
    ScorePair,
    TranslationRequest,
    map_bounded,
    token_jaccard,
)


def test_translation_request_validation():
    with pytest.raises(ProviderError):
        TranslationRequest(text="  ", source_language="en", target_language="de").validate()
    with pytest.raises(ProviderError):
        TranslationRequest(text="hi", source_language="en", target_language="en").validate()


def test_mock_translator_tags_target_language(translator):
    out = translator.translate(
        TranslationRequest(text="red shoes", source_language="en", target_language="de")
    )
    assert out == "⟦de⟧ red shoes"


def _oracle_embed(text: str) -> np.ndarray:
    """Independent re-implementation of the mock embedding recipe."""
    prepared = unicodedata.normalize("NFC", text).lower()
    padded = "␂" + prepared + "␃"
    vec = np.zeros(MOCK_EMBED_DIM)
    for i in range(len(padded) - 2):
        gram = padded[i : i + 3].encode("utf-8")
        h = 0xCBF29CE484222325
        for byte in gram:
            h = ((h ^ byte) * 0x100000001B3) % 2**64
        vec[h % MOCK_EMBED_DIM] += 1.0
    return vec / np.linalg.norm(vec)


@pytest.mark.parametrize("text", [
    "red shoes",
    "Electronics > Audio Devices > Headphones",
    "äpfel kaufen",
    "스피커 구매",
    "a",
])
def test_mock_embedder_matches_oracle(text):
    [vec] = MockEmbedder().embed([text])
    np.testing.assert_allclose(np.asarray(vec), _oracle_embed(text), rtol=0, atol=1e-12)


def test_mock_embedder_properties():
    embedder = MockEmbedder()
    vecs = embedder.embed(["wireless headphones", "Wireless  Headphones", "kettle"])
    arr = np.asarray(vecs)
    assert arr.shape == (3, MOCK_EMBED_DIM)
    np.testing.assert_allclose(np.linalg.norm(arr, axis=1), 1.0, atol=1e-12)
    # casefolding is part of the recipe; whitespace is not collapsed
    [again] = embedder.embed(["WIRELESS HEADPHONES"])
    np.testing.assert_allclose(np.asarray(again), arr[0], atol=1e-12)
    assert not np.allclose(arr[1], arr[0])


def test_mock_embedder_unicode_normalization():
    composed = "café"          # é as one code point
    decomposed = "café"       # e + combining accent
    a, b = MockEmbedder().embed([composed, decomposed])
    np.testing.assert_allclose(np.asarray(a), np.asarray(b), atol=1e-12)


def test_mock_embedder_rejects_empty_text():
    with pytest.raises(ProviderError):
        MockEmbedder().embed(["ok", ""])


def test_token_jaccard():
    assert token_jaccard("red shoes", "red shoes") == 1.0
    assert token_jaccard("red shoes", "blue kettle") == 0.0
    assert token_jaccard("red shoes", "RED boots") == pytest.approx(1 / 3)


def test_mock_scorer_orders_by_overlap():
    scorer = MockScorer()
    close = scorer.score(Task.QI, "red shoes", "red shoes", "en")
    far = scorer.score(Task.QI, "red shoes", "blue kettle", "en")
    assert close.logp_yes > far.logp_yes
    assert math.isfinite(far.logp_yes)  # the floor keeps log(0) away
    assert far.logp_yes == pytest.approx(math.log(1e-6))


def test_score_pair_requires_finite_values():
    with pytest.raises(ProviderError):
        ScorePair(logp_yes=float("nan"), logp_no=0.0)
    with pytest.raises(ProviderError):
        ScorePair(logp_yes=0.0, logp_no=float("inf"))


def test_map_bounded_preserves_input_order():
    items = list(range(200))

    def slow_square(x: int) -> int:
        return x * x

    for max_in_flight in (1, 7, 64):
        assert map_bounded(slow_square, items, max_in_flight) == [x * x for x in items]


def test_provider_settings_mock_needs_no_urls():
    settings = ProviderSettings(mode="mock")
    settings.translator()
    settings.embedder()
    settings.scorer()


def test_provider_settings_http_requires_urls():
    settings = ProviderSettings(mode="http")
    with pytest.raises(ConfigError):
        settings.translator()
    with pytest.raises(ConfigError):
        settings.embedder()
    with pytest.raises(ConfigError):
        settings.scorer()


def test_provider_settings_from_env(monkeypatch):
    monkeypatch.setenv("PROVIDER_TRANSLATE_URL", "http://host/translate")
    monkeypatch.setenv("PROVIDER_TOKEN", "secret")
    monkeypatch.delenv("PROVIDER_EMBED_URL", raising=False)
    settings = ProviderSettings.from_env()
    assert settings.translate_url == "http://host/translate"
    assert settings.token == "secret"
    settings.translator()  # URL present, client builds
    with pytest.raises(ConfigError):
        settings.embedder()


def test_mock_providers_never_touch_the_network(monkeypatch):
    import socket

    def refuse(*args, **kwargs):
        raise AssertionError("network access attempted")

    monkeypatch.setattr(socket.socket, "connect", refuse)
    MockTranslator().translate(
        TranslationRequest(text="hi", source_language="en", target_language="fr")
    )
    MockEmbedder().embed(["hi"])
    MockScorer().score(Task.QC, "hi", "Greetings > Hello", "en")
