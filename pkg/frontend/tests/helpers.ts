import { vi } from "vitest";

export interface RecordedCall {
  method: string;
  url: string;
  body: unknown;
  headers: Record<string, string>;
}

export type Responder = (call: RecordedCall) => { status?: number; body: unknown };

/**
 * fetch stub backed by a routing table of "METHOD /path" keys. Paths are
 * matched after stripping the base URL, so one server can answer for several
 * configured organizations (distinguished by base URL prefixes).
 */
export class FakeServer {
  calls: RecordedCall[] = [];
  private routes = new Map<string, Responder>();

  on(method: string, path: string, responder: Responder | unknown): void {
    const fn: Responder =
      typeof responder === "function"
        ? (responder as Responder)
        : () => ({ body: responder });
    this.routes.set(`${method} ${path}`, fn);
  }

  install(): void {
    vi.stubGlobal("fetch", (url: string, init?: RequestInit) => {
      const method = init?.method ?? "GET";
      const call: RecordedCall = {
        method,
        url,
        body: init?.body ? JSON.parse(String(init.body)) : undefined,
        headers: (init?.headers as Record<string, string>) ?? {},
      };
      this.calls.push(call);
      const path = url.replace(/^https?:\/\/[^/]+/, "");
      const responder = this.routes.get(`${method} ${path}`);
      if (!responder) {
        return Promise.resolve(jsonResponse(404, { error: "NotFound", message: path }));
      }
      const { status = 200, body } = responder(call);
      return Promise.resolve(jsonResponse(status, body));
    });
  }

  callsTo(method: string, pathSuffix: string): RecordedCall[] {
    return this.calls.filter(
      (c) => c.method === method && c.url.includes(pathSuffix),
    );
  }
}

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

/** Let queued promise callbacks run (fetch mocks resolve immediately). */
export async function flush(): Promise<void> {
  for (let i = 0; i < 10; i++) await Promise.resolve();
}
