import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiClient, encodeIdForPath } from "../src/api";
import { FederationBrowser } from "../src/browser";
import type { Shell } from "../src/types";
import { FakeServer } from "./helpers";

const ORG_O = { orgId: "org-o", baseUrl: "http://org-o-int" };
const ORG_OP = { orgId: "org-oprime", baseUrl: "http://org-oprime-int" };

const SHELL_A: Shell = {
  id: "urn:org-o:shell:a",
  assetId: "urn:asset:separator",
  idShort: "A",
  submodelRefs: ["urn:org-o:sm:engineering"],
  version: 1,
};

function makeBrowser(server: FakeServer): FederationBrowser {
  server.install();
  return new FederationBrowser(
    [new ApiClient(ORG_O), new ApiClient(ORG_OP)],
    "bob",
  );
}

afterEach(() => vi.unstubAllGlobals());

describe("federation browser", () => {
  it("renders one shell column per organization", async () => {
    const server = new FakeServer();
    server.on("GET", "/shells", (call) => ({
      body: { items: call.url.includes("org-o-int") ? [SHELL_A] : [] },
    }));
    const browser = makeBrowser(server);
    await browser.refresh();
    const left = browser.element.querySelector('[data-org="org-o"]');
    const right = browser.element.querySelector('[data-org="org-oprime"]');
    expect(left?.textContent).toContain("A (v1)");
    expect(right?.textContent).not.toContain("A (v1)");
  });

  it("renders the consolidated view with shadow links", async () => {
    const server = new FakeServer();
    server.on("GET", "/shells", { items: [SHELL_A] });
    const encoded = encodeIdForPath("urn:asset:separator");
    server.on("GET", `/assets/${encoded}/consolidated`, {
      assetId: "urn:asset:separator",
      partial: false,
      contributions: [
        {
          orgId: "org-o",
          shellId: "urn:org-o:shell:a",
          submodels: [{ submodelId: "urn:org-o:sm:engineering", shadows: null }],
        },
        {
          orgId: "org-oprime",
          shellId: "urn:org-oprime:clone:1",
          submodels: [
            {
              submodelId: "urn:org-oprime:sm:engineering-copy",
              shadows: "urn:org-o:sm:engineering",
            },
            { submodelId: "urn:org-oprime:sm:maintenance", shadows: null },
          ],
        },
      ],
    });
    const browser = makeBrowser(server);
    await browser.showAsset("urn:asset:separator");
    const shadow = browser.element.querySelector(".shadow-link");
    expect(shadow?.textContent).toBe(
      "urn:org-oprime:sm:engineering-copy shadows urn:org-o:sm:engineering",
    );
    expect(browser.element.querySelector(".partial-warning")).toBeNull();
    const orgs = [...browser.element.querySelectorAll("[data-contribution-org]")].map(
      (el) => el.getAttribute("data-contribution-org"),
    );
    expect(orgs).toEqual(["org-o", "org-oprime"]);
  });

  it("warns when the view is partial", async () => {
    const server = new FakeServer();
    const encoded = encodeIdForPath("urn:asset:separator");
    server.on("GET", `/assets/${encoded}/consolidated`, {
      assetId: "urn:asset:separator",
      partial: true,
      contributions: [],
    });
    const browser = makeBrowser(server);
    await browser.showAsset("urn:asset:separator");
    expect(browser.element.querySelector(".partial-warning")?.textContent).toContain(
      "unreachable",
    );
  });

  it("commits, promotes, confirms with a banner, and re-fetches", async () => {
    const server = new FakeServer();
    server.on("GET", "/shells", { items: [] });
    server.on("POST", "/snapshots", {
      commitId: "c0ffee1234567890",
      tag: null,
      message: "",
    });
    server.on("POST", "/snapshots/c0ffee1234567890/promote", {
      promoted: "c0ffee1234567890",
    });
    const browser = makeBrowser(server);
    await browser.commitAndPromote("org-o");
    expect(server.callsTo("POST", "/snapshots")).toHaveLength(2);
    expect(browser.element.querySelector(".banner")?.textContent).toBe(
      "Promoted c0ffee123456 to stable for org-o.",
    );
    // state re-fetched from the API, not updated optimistically
    expect(server.callsTo("GET", "/shells").length).toBeGreaterThanOrEqual(2);
  });

  it("sends a manual clone request to the target organization", async () => {
    const server = new FakeServer();
    server.on("GET", "/shells", { items: [] });
    server.on("POST", "/clone", {
      ...SHELL_A,
      id: "urn:org-oprime:clone:1",
      version: 1,
    });
    const browser = makeBrowser(server);
    await browser.requestClone("org-o", SHELL_A, "org-oprime");
    const calls = server.callsTo("POST", "/clone");
    expect(calls).toHaveLength(1);
    expect(calls[0].url).toBe("http://org-oprime-int/clone");
    expect(calls[0].body).toEqual({
      sourceOrgId: "org-o",
      sourceShellId: "urn:org-o:shell:a",
      sourceVersion: 1,
      targetOrgId: "org-oprime",
      requestedBy: "bob",
      mode: "shell-only",
    });
    expect(browser.element.textContent).toContain("Clone of A requested");
  });
});
