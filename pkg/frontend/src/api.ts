import type {
  AuditRecord,
  ConsolidatedView,
  Instance,
  OrgEndpoint,
  Shell,
  ShellDescriptor,
  SnapshotCommit,
  Task,
} from "./types";

/** Error raised for any non-2xx response, carrying the server's payload. */
export class ApiError extends Error {
  status: number;
  errorType: string;
  fieldErrors: Record<string, string>;

  constructor(status: number, payload: Record<string, unknown>) {
    super(String(payload.message ?? payload.error ?? `HTTP ${status}`));
    this.status = status;
    this.errorType = String(payload.error ?? "");
    this.fieldErrors = (payload.fieldErrors as Record<string, string>) ?? {};
  }
}

// Path segments for entity ids are unpadded base64url.
export function encodeIdForPath(id: string): string {
  const bytes = new TextEncoder().encode(id);
  let binary = "";
  for (const b of bytes) binary += String.fromCharCode(b);
  return btoa(binary).replace(/\+/g, "-").replace(/\//g, "_").replace(/=+$/, "");
}

/** Thin client for one organization's internal REST listener. */
export class ApiClient {
  constructor(private endpoint: OrgEndpoint) {}

  get orgId(): string {
    return this.endpoint.orgId;
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const headers: Record<string, string> = {};
    if (this.endpoint.token) {
      headers["authorization"] = `Bearer ${this.endpoint.token}`;
    }
    if (body !== undefined) headers["content-type"] = "application/json";
    const resp = await fetch(this.endpoint.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await resp.text();
    const payload = text ? JSON.parse(text) : {};
    if (!resp.ok) throw new ApiError(resp.status, payload);
    return payload as T;
  }

  listTasks(group?: string): Promise<{ items: Task[] }> {
    const query = group ? `?group=${encodeURIComponent(group)}` : "";
    return this.request("GET", `/tasks${query}`);
  }

  completeTask(
    taskId: string,
    user: string,
    values: Record<string, unknown>,
  ): Promise<Instance> {
    return this.request("POST", `/tasks/${taskId}/complete`, { user, values });
  }

  listInstances(): Promise<{ items: Instance[] }> {
    return this.request("GET", "/workflows/instances");
  }

  getAudit(instanceId: string): Promise<{ items: AuditRecord[] }> {
    return this.request("GET", `/workflows/instances/${instanceId}/audit`);
  }

  listShells(): Promise<{ items: Shell[] }> {
    return this.request("GET", "/shells");
  }

  listDescriptors(): Promise<{ items: ShellDescriptor[] }> {
    return this.request("GET", "/registry/shell-descriptors");
  }

  consolidated(assetId: string): Promise<ConsolidatedView> {
    return this.request("GET", `/assets/${encodeIdForPath(assetId)}/consolidated`);
  }

  snapshotCommit(tag?: string): Promise<SnapshotCommit> {
    return this.request("POST", "/snapshots", { tag: tag ?? null, message: "" });
  }

  snapshotPromote(commitId: string): Promise<{ promoted: string }> {
    return this.request("POST", `/snapshots/${commitId}/promote`);
  }

  requestClone(body: {
    sourceOrgId: string;
    sourceShellId: string;
    sourceVersion: number;
    targetOrgId: string;
    requestedBy: string;
  }): Promise<Shell> {
    return this.request("POST", "/clone", { ...body, mode: "shell-only" });
  }

  startWorkflow(
    processKey: string,
    variables: Record<string, unknown>,
  ): Promise<Instance> {
    return this.request("POST", `/workflows/${processKey}/start`, { variables });
  }
}
