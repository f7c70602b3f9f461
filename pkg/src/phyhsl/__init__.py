"""Physics-informed hypergraph dynamics learning for forecasting on complex networks."""

__version__ = "0.1.0"
