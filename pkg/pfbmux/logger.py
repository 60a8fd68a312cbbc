import logging

LOG_FORMAT = "%(levelname)s - %(message)s"

# transport chatter from the S3 client stays at WARNING even under --debug
QUIET_LOGGERS = ("boto3", "botocore", "s3transfer", "urllib3")


def configure_logger(logger, debug=False, format=LOG_FORMAT):
    """
    Route pfbmux records to a single stderr handler.

    Root handlers and any handler left on ``logger`` by an earlier command in
    the same process are dropped first.

    Args:
        logger (logging.Logger): The "pfbmux" logger.
        debug (bool, optional): DEBUG level when set, INFO otherwise.
        format (str, optional): Record format. Default is LOG_FORMAT.
    """
    logger.root.handlers = []
    logger.handlers = []
    logger.setLevel(logging.DEBUG if debug else logging.INFO)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(format))
    logger.addHandler(handler)
    for name in QUIET_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)
