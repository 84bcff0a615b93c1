"""Desk-scale experiments on expansion of finite quotients of integer matrix groups."""

__version__ = "0.1.0"
