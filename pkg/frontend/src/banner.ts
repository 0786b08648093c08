import { ApiError } from "./api.js";

/**
 * Dismissible error banner showing the service's error JSON verbatim.
 * `onRetry` adds a retry button for connection-level failures.
 */
export function showBanner(host: HTMLElement, err: unknown, onRetry?: () => void): void {
  host.querySelector(".banner")?.remove();
  const banner = document.createElement("div");
  banner.className = "banner";

  const text = document.createElement("code");
  text.textContent =
    err instanceof ApiError
      ? JSON.stringify(err.toJSON())
      : JSON.stringify({ error: { code: "ClientError", message: String(err) } });
  banner.appendChild(text);

  if (onRetry && err instanceof ApiError && err.status === 0) {
    const retry = document.createElement("button");
    retry.type = "button";
    retry.className = "retry";
    retry.textContent = "retry";
    retry.addEventListener("click", () => {
      banner.remove();
      onRetry();
    });
    banner.appendChild(retry);
  }

  const dismiss = document.createElement("button");
  dismiss.type = "button";
  dismiss.className = "dismiss";
  dismiss.textContent = "dismiss";
  dismiss.addEventListener("click", () => banner.remove());
  banner.appendChild(dismiss);

  host.prepend(banner);
}
