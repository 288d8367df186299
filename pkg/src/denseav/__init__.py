"""Dense localization of audio-visual events in untrimmed feature sequences."""

__version__ = "0.1.0"
