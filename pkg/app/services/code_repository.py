from __future__ import annotations

import asyncio
import json
import logging
from pathlib import Path
from typing import Dict, Optional, Tuple

import httpx

from app.core.config import settings
from app.services.codes import CssCode, load_alist, new_css

logger = logging.getLogger(__name__)


def default_file_names(name: str) -> Tuple[str, str]:
    return f"{name}_hx.alist", f"{name}_hz.alist"


class CodeRepositoryClient:
    """Downloads H_X / H_Z alist files of external codes into the local codes directory."""

    def __init__(
        self,
        base_url: Optional[str] = None,
        codes_dir: Optional[Path] = None,
        client: Optional[httpx.AsyncClient] = None,
    ) -> None:
        self._base_url = (base_url or settings.codes_repo_url).rstrip("/")
        self._codes_dir = Path(codes_dir) if codes_dir is not None else settings.codes_path()
        self._client = client or httpx.AsyncClient(timeout=60, follow_redirects=True)

    async def close(self) -> None:
        await self._client.aclose()

    async def fetch_text(self, remote_path: str) -> str:
        url = f"{self._base_url}/{remote_path.lstrip('/')}"
        resp = await self._client.get(url)
        resp.raise_for_status()
        return resp.text

    async def fetch_code(
        self,
        name: str,
        hx_file: Optional[str] = None,
        hz_file: Optional[str] = None,
    ) -> CssCode:
        """Download both matrices, validate them as a CSS pair and write a manifest.

        Files land in ``<codes_dir>/<name>/`` and the manifest in
        ``<codes_dir>/<name>.json`` so the code loads with ``load_code(name)``.
        """
        default_hx, default_hz = default_file_names(name)
        hx_file = hx_file or default_hx
        hz_file = hz_file or default_hz
        hx_text, hz_text = await asyncio.gather(self.fetch_text(hx_file), self.fetch_text(hz_file))
        code = new_css(load_alist(hx_text), load_alist(hz_text), name=name)

        target = self._codes_dir / name
        target.mkdir(parents=True, exist_ok=True)
        hx_local = target / Path(hx_file).name
        hz_local = target / Path(hz_file).name
        hx_local.write_text(hx_text)
        hz_local.write_text(hz_text)
        manifest: Dict[str, str] = {
            "name": name,
            "hx_path": f"{name}/{hx_local.name}",
            "hz_path": f"{name}/{hz_local.name}",
            "source": self._base_url,
        }
        manifest_path = self._codes_dir / f"{name}.json"
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        logger.info("fetched %s [[%d,%d]] into %s", name, code.n, code.k, target)
        return code
