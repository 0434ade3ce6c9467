"""The closed command vocabulary.

Fourteen application commands cover the document lifecycle; two further
control commands (start/stop port) are accepted only on the administration
port from the role-set identity.  Unknown names are rejected at decode time.
"""

from __future__ import annotations

from enum import Enum


class CommandKind(str, Enum):
    INSTALL_DEFINITION = "INSTALL_DEFINITION"
    INSTALL_STYLESHEET = "INSTALL_STYLESHEET"
    INSTALL_ROLE = "INSTALL_ROLE"
    REVOKE_ROLE = "REVOKE_ROLE"
    CREATE_DOC = "CREATE_DOC"
    STORE_DOC = "STORE_DOC"
    GET_DOC = "GET_DOC"
    SEARCH_DOCS = "SEARCH_DOCS"
    RENDER_DOC = "RENDER_DOC"
    VERIFY_DOC = "VERIFY_DOC"
    SET_ATTRIBUTE = "SET_ATTRIBUTE"
    GET_ATTRIBUTE = "GET_ATTRIBUTE"
    LIST_TYPES = "LIST_TYPES"
    STATUS = "STATUS"
    START_PORT = "START_PORT"
    STOP_PORT = "STOP_PORT"


ADMIN_KINDS = frozenset({CommandKind.START_PORT, CommandKind.STOP_PORT})

APPLICATION_KINDS = frozenset(CommandKind) - ADMIN_KINDS

# Kinds reserved to the role-set identity regardless of role-map entries.
ROLE_SET_ONLY_KINDS = frozenset(
    {CommandKind.INSTALL_ROLE, CommandKind.REVOKE_ROLE} | ADMIN_KINDS
)
