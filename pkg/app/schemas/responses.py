from __future__ import annotations

from typing import Any, Dict, List

from pydantic import BaseModel


class CodeListResponse(BaseModel):
    codes: List[str]


class CodeReportResponse(BaseModel):
    name: str
    n: int
    k: int
    m_x: int
    m_z: int
    rank_hx: int
    rank_hz: int
    hx_row_weights: Dict[int, int]
    hx_col_weights: Dict[int, int]
    hz_row_weights: Dict[int, int]
    hz_col_weights: Dict[int, int]
    hx_four_cycles: bool
    hz_four_cycles: bool
    metadata: Dict[str, Any]
