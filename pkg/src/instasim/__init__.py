"""instasim: instance-centric multi-agent driving simulation and behavior learning."""

__version__ = "0.1.0"
