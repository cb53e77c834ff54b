import { defineConfig } from "vitest/config";

export default defineConfig({
  // dev server forwards API calls to a locally running `clearsea serve`;
  // the production bundle is served by that same process via --static-dir,
  // so built code only ever talks to its own origin
  server: {
    proxy: { "/api": "http://127.0.0.1:8765" },
  },
  build: {
    target: "es2020",
  },
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
  },
});
