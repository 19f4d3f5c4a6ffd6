"""Exact-number helpers: parsing decimals into Fractions and rendering them back."""

from __future__ import annotations

from decimal import Decimal, InvalidOperation
from fractions import Fraction


def parse_fraction(text: str) -> Fraction:
    """Parse ``"2.5"``, ``"1e9"``, ``"3"`` or ``"1/3"`` exactly."""
    text = text.strip()
    if "/" in text:
        return Fraction(text)
    try:
        return Fraction(Decimal(text))
    except (InvalidOperation, ValueError) as exc:
        raise ValueError(f"not a number: {text!r}") from exc


def _is_terminating(value: Fraction) -> bool:
    d = value.denominator
    for p in (2, 5):
        while d % p == 0:
            d //= p
    return d == 1


def format_exact(value: Fraction | int) -> str:
    """Render without loss: a plain decimal when it terminates, else ``p/q``."""
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    if not _is_terminating(value):
        return f"{value.numerator}/{value.denominator}"
    # Scale by 10**k until integral.
    k = 0
    scaled = value
    while scaled.denominator != 1:
        scaled *= 10
        k += 1
    s = str(abs(scaled.numerator)).rjust(k + 1, "0")
    sign = "-" if value < 0 else ""
    return f"{sign}{s[:-k]}.{s[-k:]}"


def format_decimal(value: Fraction | int | None, places: int = 6, missing: str = "") -> str:
    """Round half-even to ``places`` decimals for report emission."""
    if value is None:
        return missing
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    q = Decimal(value.numerator) / Decimal(value.denominator)
    return str(q.quantize(Decimal(1).scaleb(-places)))
