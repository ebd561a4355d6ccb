from __future__ import annotations

import asyncio
import json

import httpx
import pytest

from app.core.errors import CodeValidationError
from app.services.code_repository import CodeRepositoryClient, default_file_names
from app.services.codes import load_code, steane_code, write_alist

BASE = "https://codes.example.org/raw"


def serve(files):
    requested = []

    def handler(request: httpx.Request) -> httpx.Response:
        requested.append(request.url.path)
        name = request.url.path.rsplit("/", 1)[-1]
        if name not in files:
            return httpx.Response(404, text="not found")
        return httpx.Response(200, text=files[name])

    return httpx.AsyncClient(transport=httpx.MockTransport(handler)), requested


async def fetch(client, tmp_path, name, **kwargs):
    repo = CodeRepositoryClient(base_url=BASE + "/", codes_dir=tmp_path, client=client)
    try:
        return await repo.fetch_code(name, **kwargs)
    finally:
        await repo.close()


def test_default_file_names():
    assert default_file_names("B1") == ("B1_hx.alist", "B1_hz.alist")


def test_fetch_writes_matrices_and_manifest(tmp_path):
    steane = steane_code()
    text = write_alist(steane.hx)
    client, requested = serve({"steane7_hx.alist": text, "steane7_hz.alist": text})

    code = asyncio.run(fetch(client, tmp_path, "steane7"))

    assert (code.n, code.k) == (7, 1)
    assert sorted(requested) == ["/raw/steane7_hx.alist", "/raw/steane7_hz.alist"]
    manifest = json.loads((tmp_path / "steane7.json").read_text())
    assert manifest == {
        "hx_path": "steane7/steane7_hx.alist",
        "hz_path": "steane7/steane7_hz.alist",
        "name": "steane7",
        "source": BASE,
    }
    assert (tmp_path / "steane7" / "steane7_hx.alist").read_text() == text
    assert load_code("steane7", codes_dir=tmp_path).hx == steane.hx


def test_fetch_with_explicit_file_names(tmp_path):
    text = write_alist(steane_code().hx)
    client, _ = serve({"x.alist": text, "z.alist": text})
    code = asyncio.run(fetch(client, tmp_path, "ham", hx_file="mats/x.alist", hz_file="mats/z.alist"))
    assert code.name == "ham"
    manifest = json.loads((tmp_path / "ham.json").read_text())
    assert manifest["hx_path"] == "ham/x.alist"


def test_missing_file_raises(tmp_path):
    client, _ = serve({"B1_hx.alist": write_alist(steane_code().hx)})
    with pytest.raises(httpx.HTTPStatusError):
        asyncio.run(fetch(client, tmp_path, "B1"))
    assert not (tmp_path / "B1.json").exists()


def test_non_commuting_pair_is_not_saved(tmp_path):
    from app.core.gf2 import SparseBitMatrix

    hx = write_alist(SparseBitMatrix.from_dense([[1, 1, 0]]))
    hz = write_alist(SparseBitMatrix.from_dense([[0, 1, 1]]))
    client, _ = serve({"bad_hx.alist": hx, "bad_hz.alist": hz})
    with pytest.raises(CodeValidationError):
        asyncio.run(fetch(client, tmp_path, "bad"))
    assert not (tmp_path / "bad.json").exists()
