"""The platform server: ports, role-map authorization, repositories, dispatch."""

from .config import PortConfig, ServerConfig, ConfigError, load_config
from .server import PlatformServer

__all__ = ["PortConfig", "ServerConfig", "ConfigError", "load_config", "PlatformServer"]
