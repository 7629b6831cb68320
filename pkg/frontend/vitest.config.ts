import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    environment: "node",
    // The live smoke test builds service fixtures and runs vocoding on a
    // single core; hooks and that one test override timeouts locally.
    testTimeout: 15_000,
    hookTimeout: 240_000,
  },
});
