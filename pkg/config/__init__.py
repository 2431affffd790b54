from config.run_config import RunConfig, MissingOptionError, load_config_values

__all__ = ["RunConfig", "MissingOptionError", "load_config_values"]
