"""Exact fixed-point formatting for report tables.

Values stay rational until the final string; rounding is half-to-even at
the requested decimal count, so repeated renders can never drift.
"""

from __future__ import annotations

from fractions import Fraction


def format_fixed(value: Fraction, decimals: int, force_sign: bool = False) -> str:
    """Render an exact fraction with a fixed number of decimals.

    force_sign renders an explicit +/-, with a rounded zero normalized
    to "+".
    """
    scaled = round(value * 10 ** decimals)
    digits = str(abs(scaled)).rjust(decimals + 1, "0")
    if decimals:
        body = f"{digits[:-decimals]}.{digits[-decimals:]}"
    else:
        body = digits
    if scaled < 0:
        return "-" + body
    return ("+" + body) if force_sign else body


def format_percent(ratio: Fraction, decimals: int = 1,
                   force_sign: bool = False) -> str:
    return format_fixed(ratio * 100, decimals, force_sign=force_sign)
