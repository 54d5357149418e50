"""Thin client for the monitoring service.

Talks to a remote server when given a base URL; otherwise mounts the
FastAPI app in-process through an ASGI transport, so the CLI works with
no server running while exercising exactly the same request/response
path.
"""

from __future__ import annotations

from typing import Any

import httpx

from .errors import CondmonError


class ServiceError(CondmonError):
    """Error reported by the service, carrying its error code."""

    def __init__(self, code: str, message: str, status: int):
        super().__init__(message)
        self.code = code
        self.status = status


class ServiceClient:
    """Synchronous JSON-over-HTTP client for the condmon service."""

    def __init__(self, base_url: str | None = None, timeout: float = 3600.0):
        if base_url:
            self._client = httpx.Client(base_url=base_url, timeout=timeout)
        else:
            from .service import create_app

            transport = httpx.ASGITransport(app=create_app())
            self._client = httpx.Client(
                transport=transport, base_url="http://condmon.local", timeout=timeout
            )

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "ServiceClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _post(self, path: str, payload: dict[str, Any]) -> dict[str, Any]:
        response = self._client.post(path, json=payload)
        return self._handle(response)

    def _handle(self, response: httpx.Response) -> dict[str, Any]:
        if response.status_code >= 400:
            detail: Any = None
            try:
                detail = response.json().get("detail")
            except ValueError:
                pass
            if isinstance(detail, dict) and "code" in detail:
                raise ServiceError(
                    code=detail["code"],
                    message=detail.get("message", "service error"),
                    status=response.status_code,
                )
            # Pydantic validation errors arrive as a list under "detail".
            if response.status_code == 422:
                raise ServiceError(
                    code="invalid-input",
                    message=f"request rejected: {detail}",
                    status=422,
                )
            raise ServiceError(
                code="internal-error",
                message=f"service returned HTTP {response.status_code}",
                status=response.status_code,
            )
        return response.json()

    def health(self) -> dict[str, Any]:
        return self._handle(self._client.get("/v1/health"))

    def generate(self, **payload: Any) -> dict[str, Any]:
        return self._post("/v1/generate", payload)

    def clean(self, **payload: Any) -> dict[str, Any]:
        return self._post("/v1/clean", payload)

    def train(self, **payload: Any) -> dict[str, Any]:
        return self._post("/v1/train", payload)

    def monitor(self, **payload: Any) -> dict[str, Any]:
        return self._post("/v1/monitor", payload)

    def retrain(self, **payload: Any) -> dict[str, Any]:
        return self._post("/v1/retrain", payload)

    def bench(self, **payload: Any) -> dict[str, Any]:
        return self._post("/v1/bench", payload)
