import { defineConfig } from "vitest/config";

// The query server speaks plain JSON without CORS headers; during
// development the dev server proxies the three API paths to it. Point
// PREFIXCUBE_URL at a running `prefixcube serve` instance, or pass
// ?server=... in the page URL to talk to one directly.
const target = process.env.PREFIXCUBE_URL ?? "http://127.0.0.1:8080";

export default defineConfig({
  server: {
    proxy: {
      "/schema": target,
      "/stats": target,
      "/query": target,
    },
  },
  test: {
    environment: "jsdom",
  },
});
