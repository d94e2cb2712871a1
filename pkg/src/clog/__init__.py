import logging
import os
from pathlib import Path
from typing import Optional


LOG_FORMAT = '%(asctime)s - %(name)s - %(funcName)s:%(lineno)d - %(levelname)s - %(message)s'
SIMPLE_LOG_FORMAT = '%(asctime)s - %(message)s'
RUN_LOG_FILE_NAME = "run.log"


def create_log_folder() -> str:
    log_folder_path = os.environ.get("FEDPLT_LOG_DIR", None)
    if not log_folder_path:
        log_folder_path = "./logs"
    os.makedirs(log_folder_path, exist_ok=True)

    return log_folder_path


def _level_from_env() -> int:
    level = logging.getLevelNamesMapping().get(os.environ.get("FEDPLT_LOG_LEVEL", "INFO").upper())
    return level if level is not None else logging.INFO


def create_file_handler(file_path: str, log_format: str = LOG_FORMAT) -> logging.FileHandler:
    file_handler = logging.FileHandler(file_path)
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(logging.Formatter(log_format))

    return file_handler


def create_console_handler(log_format: str) -> logging.StreamHandler:
    console_handler = logging.StreamHandler()
    console_handler.setLevel(logging.DEBUG)
    console_handler.setFormatter(logging.Formatter(log_format))

    return console_handler


class CLogger(logging.Logger):
    """Logger with a console handler and optional file handlers.

    Simulation runs attach an extra file handler pointing into their output folder, so that
    every run directory keeps the log of how it was produced next to its metrics.
    """

    def __init__(self, name: str, level: int, file_name: str | None, simple_logging_format: bool = False):
        super().__init__(name, level)

        self.log_format = SIMPLE_LOG_FORMAT if simple_logging_format else LOG_FORMAT
        self.console_handler = create_console_handler(self.log_format)
        self.file_handler = None
        if file_name:
            file_path = os.path.join(create_log_folder(), file_name)
            self.file_handler = create_file_handler(file_path, self.log_format)
            self.addHandler(self.file_handler)

        self.addHandler(self.console_handler)
        self.run_handlers: dict[str, logging.FileHandler] = {}

    def attach_run_file(self, run_dir: str | Path) -> Path:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        file_path = run_dir / RUN_LOG_FILE_NAME
        if str(file_path) not in self.run_handlers:
            handler = create_file_handler(str(file_path), self.log_format)
            self.addHandler(handler)
            self.run_handlers[str(file_path)] = handler

        return file_path

    def detach_run_files(self):
        for handler in self.run_handlers.values():
            self.removeHandler(handler)
            handler.close()
        self.run_handlers = {}


_LOGGERS: dict[str, CLogger] = {}


def get_logger(name: str, file_name: Optional[str] = None, simple: bool = False) -> CLogger:
    # Same name -> same logger, otherwise handlers pile up on re-import
    if name not in _LOGGERS:
        _LOGGERS[name] = CLogger(name=name, level=_level_from_env(), file_name=file_name, simple_logging_format=simple)

    return _LOGGERS[name]


def attach_run_log(run_dir: str | Path, prefix: str = "fedplt") -> Path:
    """Route every project logger whose name starts with `prefix` into `<run_dir>/run.log`."""
    file_path = Path(run_dir) / RUN_LOG_FILE_NAME
    for name, clogger in _LOGGERS.items():
        if name.startswith(prefix):
            file_path = clogger.attach_run_file(run_dir)

    return file_path


def detach_run_log(prefix: str = "fedplt"):
    for name, clogger in _LOGGERS.items():
        if name.startswith(prefix):
            clogger.detach_run_files()

