"""Transit-obfuscating path planners over grid maps and graphs."""

__version__ = '1.0.0'
