import logging
from collections import deque
from dataclasses import dataclass
from typing import TextIO


@dataclass
class Message:
    """A single report line with its level"""

    text: str
    level: int = logging.INFO


class RunLog:
    """
    Collects the report lines of one command run. They are printed once, by
    dump; library diagnostics go through logging instead.
    """

    def __init__(self, max_messages: int = 1000):
        self.messages: deque[Message] = deque(maxlen=max_messages)
        self.failed: bool = False

    def add(self, text: str, level: int = logging.INFO):
        """Add a message to the log"""
        self.messages.append(Message(text, level))
        if level >= logging.ERROR:
            self.failed = True

    def add_info(self, text: str):
        self.add(text, logging.INFO)

    def add_warning(self, text: str):
        self.add(text, logging.WARNING)

    def add_success(self, text: str):
        self.add(text, logging.INFO)

    def add_error(self, text: str):
        """Convenience: add an error; the run then exits non-zero"""
        self.add(text, logging.ERROR)

    def lines(self) -> list[str]:
        prefixes = {logging.WARNING: "warning: ", logging.ERROR: "error: "}
        return [prefixes.get(m.level, "") + m.text for m in self.messages]

    def dump(self, stream: TextIO) -> None:
        for line in self.lines():
            print(line, file=stream)
