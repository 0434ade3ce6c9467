"""Secure e-document administration.

A platform server that stores, authorizes, renders and verifies signed XML
e-docs via a signed-command protocol, the client tools that feed it, and an
offline-capable medical-records workflow built on top.
"""

__version__ = "0.1.0"
