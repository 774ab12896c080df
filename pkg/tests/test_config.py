import logging

import config


def test_env_int_reads_integer(monkeypatch):
    monkeypatch.setenv("HANDSOFF_THREADS", "3")
    assert config.env_int("HANDSOFF_THREADS", 8) == 3


def test_env_int_clamps_to_minimum(monkeypatch):
    monkeypatch.setenv("HANDSOFF_THREADS", "0")
    assert config.env_int("HANDSOFF_THREADS", 8) == 1


def test_env_int_falls_back_on_garbage(monkeypatch, caplog):
    monkeypatch.setenv("HANDSOFF_THREADS", "four")
    with caplog.at_level(logging.WARNING, logger="config"):
        assert config.env_int("HANDSOFF_THREADS", 8) == 8
    assert "HANDSOFF_THREADS" in caplog.text


def test_env_int_default_when_unset(monkeypatch):
    monkeypatch.delenv("HANDSOFF_THREADS", raising=False)
    assert config.env_int("HANDSOFF_THREADS", 5) == 5
    assert config.MAX_WORKERS >= 1
