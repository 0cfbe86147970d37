"""webmeter: replay and measurement engine for browser-session event traces."""

__version__ = "0.1.0"
