import logging

LOG_FORMAT = '%(asctime)s [%(levelname)s] %(name)s: %(message)s'

# per-step engine chatter; raised to INFO or DEBUG through DEEP_EPROP_LOG_LEVELS
ENGINE_LOGGERS = ('deep_eprop.network', 'deep_eprop.online', 'deep_eprop.oracles')
ENGINE_LEVEL = 'WARNING'


def module_levels(overrides: dict = None) -> dict:
    '''
    **Purpose:**
    - Per-logger levels applied on top of the root level: the numeric engines at
      ``WARNING``, then any ``overrides`` (logger name -> level name).
    '''
    levels = {name: ENGINE_LEVEL for name in ENGINE_LOGGERS}
    levels.update(overrides or {})
    return levels


def setup_logging(log_type: str, log_file: str, level: str = 'INFO', overrides: dict = None) -> None:
    '''
    **Purpose:**
    - Configures logging for the command based on the specified log type and file,
      the root ``level`` and the per-module levels from ``module_levels``.

    **Parameters:**
    - `log_type` (str): One of 'none', 'console', 'file' or 'both'.
    - `log_file` (str): The file path where logs will be written if `log_type` is 'file' or 'both'.
    - `level` (str): Root level name, usually from ``DEEP_EPROP_LOG_LEVEL``.
    - `overrides` (dict): Logger name -> level name, usually from ``DEEP_EPROP_LOG_LEVELS``.

    **Raises:**
    - `ValueError`: If `log_type` is not one of the expected values
    - `RuntimeError`: If handler creation fails (e.g., due to permission issues or invalid path)
    '''
    if log_type == 'none':
        logging.disable(logging.CRITICAL)
        return

    if log_type not in ('console', 'file', 'both'):
        raise ValueError(f"Invalid log_type: {log_type}. Must be one of 'none', 'console', 'file', 'both'.")

    # a previous 'none' run in the same process must not silence this one
    logging.disable(logging.NOTSET)

    handlers = []
    try:
        if log_type in ('console', 'both'):
            handlers.append(logging.StreamHandler())
        if log_type in ('file', 'both'):
            handlers.append(logging.FileHandler(log_file, encoding='utf-8'))

        logging.basicConfig(
            level=level,
            format=LOG_FORMAT,
            handlers=handlers,
            force=True
        )
    except Exception as e:
        raise RuntimeError(f"Failed to set up logging: {e}")

    for name, name_level in module_levels(overrides).items():
        logging.getLogger(name).setLevel(name_level)
