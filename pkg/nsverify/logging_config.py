import contextlib
import contextvars
import logging
import logging.config
import os

from pythonjsonlogger import jsonlogger

from .config import Config

# (experiment name, config hash) of the run in progress, if any
_RUN = contextvars.ContextVar('nsverify_run', default=None)


class RunContextFilter(logging.Filter):
    """Stamp every record with the experiment name and config hash of the current run."""

    def filter(self, record):
        run = _RUN.get()
        record.experiment, record.config_hash = run if run else ('', '')
        return True


class CustomJsonFormatter(jsonlogger.JsonFormatter):
    def add_fields(self, log_record, record, message_dict):
        super().add_fields(log_record, record, message_dict)
        log_record.setdefault('timestamp', record.created)
        log_record['level'] = (log_record.get('level') or record.levelname).upper()
        if not log_record.get('experiment'):
            log_record.pop('experiment', None)
            log_record.pop('config_hash', None)


@contextlib.contextmanager
def run_context(name, config_hash):
    token = _RUN.set((name, config_hash))
    try:
        yield
    finally:
        _RUN.reset(token)


def setup_logging(log_dir=None, level=None):
    log_dir = log_dir or Config.LOG_DIR
    level = (level or Config.LOG_LEVEL).upper()
    os.makedirs(log_dir, exist_ok=True)

    handler_common = {'formatter': 'json', 'level': level, 'filters': ['run']}
    config = {
        'version': 1,
        'disable_existing_loggers': False,
        'filters': {
            'run': {'()': RunContextFilter},
        },
        'formatters': {
            'json': {
                '()': CustomJsonFormatter,
                'format': '%(timestamp)s %(level)s %(name)s %(experiment)s %(config_hash)s %(message)s'
            },
        },
        'handlers': {
            'console': {'class': 'logging.StreamHandler', **handler_common},
            'file': {
                'class': 'logging.handlers.RotatingFileHandler',
                'filename': os.path.join(log_dir, 'nsverify.log'),
                'maxBytes': 1024 * 1024 * 5,  # 5 MB
                'backupCount': 5,
                'encoding': 'utf-8',
                **handler_common,
            },
        },
        'loggers': {
            '': {
                'handlers': ['console', 'file'],
                'level': level,
            },
            # font and backend chatter
            'matplotlib': {'level': 'WARNING'},
            'PIL': {'level': 'WARNING'},
        }
    }
    logging.config.dictConfig(config)
