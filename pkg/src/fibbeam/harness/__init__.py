"""CLI, configuration, dataset pipelines and experiment recipes."""
