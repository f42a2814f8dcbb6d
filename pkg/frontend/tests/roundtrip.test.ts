import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { App } from "../src/app";
import type { Shell, Task } from "../src/types";
import { FakeServer, flush } from "./helpers";

// Stateful fake of the two-organization federation: triggering a clone
// approval opens a task; approving it makes the clone shell appear.

const CLONE: Shell = {
  id: "urn:org-oprime:clone:1",
  assetId: "urn:asset:separator",
  idShort: "A",
  submodelRefs: [],
  version: 1,
  provenance: { sourceOrgId: "org-o", sourceId: "urn:org-o:shell:a" },
};

describe("UI task round-trip", () => {
  let server: FakeServer;
  let tasks: Task[];
  let targetShells: Shell[];
  let app: App;

  beforeEach(() => {
    vi.useFakeTimers();
    tasks = [];
    targetShells = [];
    server = new FakeServer();
    server.on("GET", "/tasks", () => ({ body: { items: tasks } }));
    server.on("GET", "/workflows/instances", { items: [] });
    server.on("GET", "/shells", (call) => ({
      body: { items: call.url.includes("org-oprime-int") ? targetShells : [] },
    }));
    server.on("POST", "/tasks/task-1/complete", (call) => {
      const values = (call.body as { values: Record<string, unknown> }).values;
      tasks = [];
      if (values.decision === "approve") targetShells = [CLONE];
      return {
        body: {
          instanceId: "wf-1",
          processKey: "clone-approval",
          processVersion: 1,
          state: values.decision === "approve" ? "completed" : "terminated",
          variables: values,
          currentNodeId: null,
          startedAt: "t0",
          endedAt: "t1",
        },
      };
    });
    server.install();
    app = new App({
      user: "bob",
      orgs: [
        { orgId: "org-oprime", baseUrl: "http://org-oprime-int" },
        { orgId: "org-o", baseUrl: "http://org-o-int" },
      ],
    });
    app.start();
  });

  afterEach(() => {
    app.stop();
    vi.useRealTimers();
    vi.unstubAllGlobals();
  });

  it("surfaces the approval, blocks invalid submits, and shows the clone", async () => {
    await flush();
    expect(app.inbox.element.textContent).toContain("No open tasks");

    // the trigger fires: the task must be visible within the 2 s budget
    tasks = [
      {
        taskId: "task-1",
        instanceId: "wf-1",
        nodeId: "approve-clone",
        name: "Approve cloning of urn:org-o:shell:a",
        candidateGroup: "plant-engineers",
        formFields: [
          {
            name: "decision",
            type: "enum",
            required: true,
            options: ["approve", "reject"],
          },
        ],
        status: "open",
        submittedBy: null,
        submittedValues: null,
      },
    ];
    await vi.advanceTimersByTimeAsync(2000);
    expect(app.inbox.element.textContent).toContain("Approve cloning");

    app.inbox.element.querySelector("li button")!.dispatchEvent(new Event("click"));
    const form = app.inbox.element.querySelector("form")!;

    // submitting with the required decision empty never reaches the API
    form.dispatchEvent(new Event("submit", { cancelable: true }));
    await flush();
    expect(server.callsTo("POST", "/complete")).toHaveLength(0);
    expect(
      app.inbox.element.querySelector('[data-field="decision"]')?.textContent,
    ).toBe("required");

    // approve: the new shell shows up in the federation browser
    (app.inbox.element.querySelector("select") as HTMLSelectElement).value =
      "approve";
    app.inbox.element
      .querySelector("form")!
      .dispatchEvent(new Event("submit", { cancelable: true }));
    await flush();
    expect(server.callsTo("POST", "/complete")).toHaveLength(1);
    const column = app.browser.element.querySelector('[data-org="org-oprime"]');
    expect(column?.textContent).toContain("A (v1)");
    expect(
      app.browser.element.querySelector(
        '[data-shell-id="urn:org-oprime:clone:1"]',
      ),
    ).not.toBeNull();
  });
});
