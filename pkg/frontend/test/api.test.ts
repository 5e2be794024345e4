import { describe, expect, it } from "vitest";

import { ApiClient, ApiError, type FetchLike } from "../src/api.js";

interface Recorded {
  url: string;
  init?: RequestInit;
}

function fakeFetch(
  responses: { status: number; body: unknown }[],
  log: Recorded[],
): FetchLike {
  return async (url, init) => {
    log.push({ url, init });
    const next = responses.shift() ?? { status: 500, body: { detail: "exhausted" } };
    const text =
      typeof next.body === "string" ? next.body : JSON.stringify(next.body);
    return new Response(text, { status: next.status });
  };
}

describe("ApiClient", () => {
  it("stores the token from login and sends it as a bearer header", async () => {
    const log: Recorded[] = [];
    const client = new ApiClient(
      "http://api",
      fakeFetch(
        [
          { status: 200, body: { token: "t0k", user: "u", roles: ["clerk"] } },
          { status: 200, body: { results: [] } },
        ],
        log,
      ),
    );
    const session = await client.login("u", "pw");
    expect(session.roles).toEqual(["clerk"]);
    await client.searchProcedures({ proc_type: "A" });
    expect(log[1]!.url).toBe("http://api/procedures?proc_type=A");
    expect(
      (log[1]!.init!.headers as Record<string, string>)["Authorization"],
    ).toBe("Bearer t0k");
  });

  it("posts submissions with role, version token and fields", async () => {
    const log: Recorded[] = [];
    const client = new ApiClient(
      "http://api",
      fakeFetch([{ status: 200, body: { id: "i", version: 3, current_step: "b" } }], log),
    );
    client.setToken("t");
    await client.submitStep("i1", "C1", {
      role: "clerk",
      version: 2,
      fields: { reg_no: "G-11" },
    });
    expect(log[0]!.url).toBe("http://api/procedures/i1/steps/C1");
    expect(JSON.parse(String(log[0]!.init!.body))).toEqual({
      role: "clerk",
      version: 2,
      fields: { reg_no: "G-11" },
    });
  });

  it("raises ApiError with the server's error kind", async () => {
    const client = new ApiClient(
      "http://api",
      fakeFetch(
        [{ status: 409, body: { detail: { kind: "StaleVersion", message: "v2 != v3" } } }],
        [],
      ),
    );
    client.setToken("t");
    const err = await client
      .submitStep("i", "s", { role: "clerk", version: 2, fields: {} })
      .catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(409);
    expect(err.kind).toBe("StaleVersion");
  });

  it("treats a 422 verify response as a verdict, not a failure", async () => {
    const verdict = {
      correct: false,
      violations: [{ kind: "OrderViolation", message: "A4 after A5" }],
      report: "incorrect: 1 violation(s)",
    };
    const client = new ApiClient(
      "http://api",
      fakeFetch([{ status: 422, body: verdict }], []),
    );
    client.setToken("t");
    expect(await client.verifyCm(["C1", "A5", "A4"])).toEqual(verdict);
  });

  it("returns plain text for text endpoints", async () => {
    const client = new ApiClient(
      "http://api",
      fakeFetch([{ status: 200, body: "digraph cm {}" }], []),
    );
    client.setToken("t");
    expect(await client.graphDot()).toBe("digraph cm {}");
  });
});
