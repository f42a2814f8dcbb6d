import { ApiClient } from "./api";
import type { ConsolidatedView, Shell } from "./types";

/**
 * Federation browser: one column of shells per organization, a consolidated
 * cross-organization view of one asset with shadow links, and controls for
 * snapshot commit/promote and manual clone requests. Every state change it
 * shows is re-fetched from the API; nothing is updated optimistically.
 */
export class FederationBrowser {
  readonly element: HTMLElement;
  private shellsByOrg = new Map<string, Shell[]>();
  private view: ConsolidatedView | null = null;
  private banner = "";

  constructor(
    private apis: ApiClient[],
    private user: string,
  ) {
    this.element = document.createElement("section");
    this.element.className = "federation-browser";
    this.render();
  }

  async refresh(): Promise<void> {
    for (const api of this.apis) {
      const { items } = await api.listShells();
      this.shellsByOrg.set(api.orgId, items);
    }
    if (this.view) this.view = await this.apis[0].consolidated(this.view.assetId);
    this.render();
  }

  async showAsset(assetId: string): Promise<void> {
    this.view = await this.apis[0].consolidated(assetId);
    this.render();
  }

  async commitAndPromote(orgId: string, tag?: string): Promise<void> {
    const api = this.apiFor(orgId);
    const commit = await api.snapshotCommit(tag);
    await api.snapshotPromote(commit.commitId);
    this.banner = `Promoted ${commit.commitId.slice(0, 12)} to stable for ${orgId}.`;
    await this.refresh();
  }

  /** Ask a target org to clone a shell; its approval workflow gates it. */
  async requestClone(
    sourceOrgId: string,
    shell: Shell,
    targetOrgId: string,
  ): Promise<void> {
    await this.apiFor(targetOrgId).requestClone({
      sourceOrgId,
      sourceShellId: shell.id,
      sourceVersion: shell.version,
      targetOrgId,
      requestedBy: this.user,
    });
    this.banner = `Clone of ${shell.idShort} requested in ${targetOrgId}.`;
    await this.refresh();
  }

  private apiFor(orgId: string): ApiClient {
    const api = this.apis.find((a) => a.orgId === orgId);
    if (!api) throw new Error(`unknown organization ${orgId}`);
    return api;
  }

  private render(): void {
    this.element.innerHTML = "";
    if (this.banner) {
      const note = document.createElement("p");
      note.className = "banner";
      note.textContent = this.banner;
      this.element.appendChild(note);
    }

    const columns = document.createElement("div");
    columns.className = "org-columns";
    for (const api of this.apis) {
      const column = document.createElement("div");
      column.className = "org-column";
      column.setAttribute("data-org", api.orgId);
      const heading = document.createElement("h3");
      heading.textContent = api.orgId;
      column.appendChild(heading);
      const list = document.createElement("ul");
      for (const shell of this.shellsByOrg.get(api.orgId) ?? []) {
        const row = document.createElement("li");
        row.setAttribute("data-shell-id", shell.id);
        row.textContent = `${shell.idShort} (v${shell.version})`;
        const viewButton = document.createElement("button");
        viewButton.textContent = "asset view";
        viewButton.addEventListener("click", () => void this.showAsset(shell.assetId));
        row.appendChild(viewButton);
        list.appendChild(row);
      }
      const promote = document.createElement("button");
      promote.className = "promote-button";
      promote.textContent = "commit + promote";
      promote.addEventListener("click", () => void this.commitAndPromote(api.orgId));
      column.append(list, promote);
      columns.appendChild(column);
    }
    this.element.appendChild(columns);

    if (this.view) this.element.appendChild(this.consolidatedPanel(this.view));
  }

  private consolidatedPanel(view: ConsolidatedView): HTMLElement {
    const panel = document.createElement("div");
    panel.className = "consolidated-view";
    const heading = document.createElement("h3");
    heading.textContent = `Asset ${view.assetId}`;
    panel.appendChild(heading);

    if (view.partial) {
      const warning = document.createElement("p");
      warning.className = "partial-warning";
      warning.textContent =
        "Partial result: at least one organization is unreachable.";
      panel.appendChild(warning);
    }

    for (const contribution of view.contributions) {
      const block = document.createElement("div");
      block.setAttribute("data-contribution-org", contribution.orgId);
      const title = document.createElement("h4");
      title.textContent = `${contribution.orgId}: ${contribution.shellId}`;
      block.appendChild(title);
      const list = document.createElement("ul");
      for (const sm of contribution.submodels) {
        const row = document.createElement("li");
        row.textContent = sm.shadows
          ? `${sm.submodelId} shadows ${sm.shadows}`
          : sm.submodelId;
        if (sm.shadows) row.className = "shadow-link";
        list.appendChild(row);
      }
      block.appendChild(list);
      panel.appendChild(block);
    }
    return panel;
  }
}
