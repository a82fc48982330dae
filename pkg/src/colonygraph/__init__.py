"""colonygraph: honeybee-style site selection simulated, encoded as graphs and embedded."""

__version__ = "0.1.0"
