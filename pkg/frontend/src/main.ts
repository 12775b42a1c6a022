import { ApiClient } from "./api";
import { App } from "./app";

// ?server=http://host:port points the UI at a query daemon directly;
// without it, requests go same-origin through the vite dev proxy.
const params = new URLSearchParams(window.location.search);
const base = params.get("server") ?? "";
const container = document.getElementById("app");

if (container) {
  App.boot(container, new ApiClient(base)).catch((err) => {
    container.textContent =
      `could not reach the query server${base ? ` at ${base}` : ""}: ` +
      `${err instanceof Error ? err.message : String(err)}`;
  });
}
