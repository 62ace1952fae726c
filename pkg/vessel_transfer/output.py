"""
Output module for the vessel-transfer package.

Renders result rows (metric lines, loss histories, selection records) as
plain space-separated lines, tables or JSON. Rows may be dicts or
dataclass instances.
"""

# pylint: disable=line-too-long

import dataclasses
import json
import logging
import math
from typing import Any, Dict, Mapping, Optional, Sequence

import tabulate

UNDEFINED = "undefined"


class Output:
    """
    Formats and prints result rows in the format chosen with ``--output``.

    Attributes:
        opts: Parsed arguments (Namespace) or a dict holding ``output``
        logger (Logger): Logger for non-data messages
    """

    def __init__(self, params):
        self.opts = params
        self.logger = logging.getLogger(__name__)

    def print_records(self, records, columns: Optional[Sequence[str]] = None, table_options=None):
        """
        Display rows in the configured output format (plain, table or JSON).

        Plain output prints one line per row with the values separated by a
        single space; floats print with four decimals and ``None`` prints as
        ``undefined``. Table output uses
        tabulate's ``pretty`` layout followed by a row count. JSON output
        prints one list of objects.

        Args:
            records (dict, dataclass, or list of either): Rows to display.
            columns (list, optional): Column order; defaults to the union of
                the rows' keys in first-seen order.
            table_options (dict, optional):
                - headers: Custom header mappings (dict)
        """
        table_options = table_options or {}
        rows = [self._as_dict(r) for r in (records if isinstance(records, list) else [records])]
        output_format = self._get_param("output", "table")

        if output_format == "json":
            print(json.dumps([self._jsonable(row) for row in rows]))
            return

        if not rows:
            self.logger.info("No results were found")
            return

        if columns is None:
            columns = []
            seen = set()
            for row in rows:
                for key in row:
                    if key not in seen:
                        seen.add(key)
                        columns.append(key)

        table_data = [[self.format_value(row.get(key)) for key in columns] for row in rows]

        if output_format == "plain":
            for cells in table_data:
                print(" ".join(cells))
            return

        header_map = table_options.get("headers") or {}
        headers = [header_map.get(key, key) for key in columns]
        print(
            tabulate.tabulate(
                table_data,
                headers,
                tablefmt="pretty",
                stralign="left",
                numalign="right",
            )
        )
        row_count = len(table_data)
        print(f"{row_count} {'row' if row_count == 1 else 'rows'}")

    @staticmethod
    def format_value(value: Any, float_format: str = ".4f") -> str:
        """Render one cell; ``None`` and non-finite floats print as ``undefined``."""
        if value is None:
            return UNDEFINED
        if isinstance(value, bool):
            return str(value).lower()
        if isinstance(value, float):
            if not math.isfinite(value):
                return UNDEFINED
            return format(value, float_format)
        return str(value)

    def _get_param(self, key, default=None):
        """Read ``key`` from a Namespace or dict of options."""
        if self.opts is None:
            return default
        if hasattr(self.opts, "__dict__"):
            return getattr(self.opts, key, default)
        if isinstance(self.opts, dict):
            return self.opts.get(key, default)
        return default

    @staticmethod
    def _as_dict(record) -> Dict[str, Any]:
        if dataclasses.is_dataclass(record) and not isinstance(record, type):
            return dataclasses.asdict(record)
        if isinstance(record, Mapping):
            return dict(record)
        raise TypeError(f"cannot render {type(record).__name__} as a row")

    @staticmethod
    def _jsonable(row: Dict[str, Any]) -> Dict[str, Any]:
        out = {}
        for key, value in row.items():
            if isinstance(value, float) and not math.isfinite(value):
                value = None
            elif hasattr(value, "tolist"):
                value = value.tolist()
            out[key] = value
        return out
