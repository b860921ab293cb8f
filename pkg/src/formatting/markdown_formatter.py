"""
Markdown formatting utilities for the seed scheduler CLI.
"""
import logging
from typing import Any, Dict, Optional

import pandas as pd

logger = logging.getLogger(__name__)

# Max rows to display in Markdown output
MAX_MARKDOWN_ROWS = 250


def format_df_to_markdown(df: pd.DataFrame, max_rows: Optional[int] = None) -> str:
    """Formats a Pandas DataFrame to a Markdown string with row truncation.

    Args:
        df: The DataFrame to format
        max_rows: Maximum rows to include in output. Defaults to MAX_MARKDOWN_ROWS if None.

    Returns:
        A markdown formatted string representation of the DataFrame
    """
    if df.empty:
        logger.warning("Attempted to format an empty DataFrame to Markdown.")
        return "(No data available to display)"

    if max_rows is None:
        max_rows = MAX_MARKDOWN_ROWS

    original_rows = df.shape[0]
    rows_to_show = min(original_rows, max_rows)
    df_display = df.head(rows_to_show)

    try:
        markdown_table = df_display.to_markdown(index=False)
    except Exception as e:
        logger.error(f"Error converting DataFrame to Markdown: {e}", exc_info=True)
        return "Error: Could not format data into Markdown table."

    if original_rows > rows_to_show:
        notes = f"rows truncated to the limit of {rows_to_show} (from {original_rows})"
        logger.debug(f"Markdown table generated with truncation notes: {notes}")
        return f"Note: Data truncated ({notes}).\n\n{markdown_table}"
    return markdown_table


def format_mapping_to_markdown(mapping: Dict[str, Any], key_header: str = "field",
                               value_header: str = "value") -> str:
    """Renders a flat mapping (program summary, model description) as a two-column table.

    Nested mappings are flattened with dotted keys; lists are joined with commas.
    """
    rows = []

    def _flatten(prefix: str, value: Any) -> None:
        if isinstance(value, dict):
            for key, inner in value.items():
                _flatten(f"{prefix}.{key}" if prefix else str(key), inner)
        elif isinstance(value, (list, tuple)):
            rows.append((prefix, ", ".join(str(v) for v in value)))
        else:
            rows.append((prefix, value))

    _flatten("", mapping)
    return format_df_to_markdown(pd.DataFrame(rows, columns=[key_header, value_header]))
