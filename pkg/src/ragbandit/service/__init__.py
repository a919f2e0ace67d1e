from .manager import Conflict, Invalid, NotFound, ServiceError, SessionManager

__all__ = ["SessionManager", "ServiceError", "NotFound", "Conflict", "Invalid", "create_app"]


def create_app(manager=None):
    from .app import create_app as _create
    return _create(manager)
