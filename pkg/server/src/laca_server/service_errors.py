"""Service-level errors carrying an HTTP status for the wire layer."""

from __future__ import annotations


class ServiceError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
