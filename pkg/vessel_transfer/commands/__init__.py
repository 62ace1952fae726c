"""Subcommands of the vessel-transfer CLI, one module per command."""
