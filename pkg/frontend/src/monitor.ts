import { ApiClient } from "./api";
import type { AuditRecord, Instance } from "./types";

/**
 * Process-instance monitor: instance list with state chips, the current
 * node highlighted for running instances, and an on-demand audit trail
 * rendered as the ordered event list the engine recorded.
 */
export class InstanceMonitor {
  readonly element: HTMLElement;
  private instances: Instance[] = [];
  private audit: AuditRecord[] | null = null;
  private auditInstanceId: string | null = null;

  constructor(private api: ApiClient) {
    this.element = document.createElement("section");
    this.element.className = "instance-monitor";
    this.render();
  }

  async refresh(): Promise<void> {
    const { items } = await this.api.listInstances();
    this.instances = items;
    if (this.auditInstanceId) {
      this.audit = (await this.api.getAudit(this.auditInstanceId)).items;
    }
    this.render();
  }

  async showAudit(instanceId: string): Promise<void> {
    this.auditInstanceId = instanceId;
    this.audit = (await this.api.getAudit(instanceId)).items;
    this.render();
  }

  private render(): void {
    this.element.innerHTML = "";
    const heading = document.createElement("h2");
    heading.textContent = "Instances";
    this.element.appendChild(heading);

    if (this.instances.length === 0) {
      const empty = document.createElement("p");
      empty.className = "empty-state";
      empty.textContent = "No process instances yet.";
      this.element.appendChild(empty);
      return;
    }

    const table = document.createElement("ul");
    table.className = "instance-list";
    for (const instance of this.instances) {
      const row = document.createElement("li");
      row.setAttribute("data-instance-id", instance.instanceId);
      const chip = document.createElement("span");
      chip.className = `state-chip state-${instance.state}`;
      chip.textContent = instance.state;
      const label = document.createElement("span");
      label.textContent = ` ${instance.processKey} v${instance.processVersion} `;
      row.append(chip, label);
      if (instance.state === "running" && instance.currentNodeId) {
        const node = document.createElement("strong");
        node.className = "current-node";
        node.textContent = `@ ${instance.currentNodeId}`;
        row.appendChild(node);
      }
      const auditButton = document.createElement("button");
      auditButton.textContent = "audit";
      auditButton.addEventListener("click", () =>
        void this.showAudit(instance.instanceId),
      );
      row.appendChild(auditButton);
      table.appendChild(row);
    }
    this.element.appendChild(table);

    if (this.audit) this.element.appendChild(this.auditList(this.audit));
  }

  private auditList(records: AuditRecord[]): HTMLElement {
    const panel = document.createElement("ol");
    panel.className = "audit-trail";
    for (const record of records) {
      const row = document.createElement("li");
      row.setAttribute("data-seq", String(record.seq));
      let text = record.event;
      // flow-taken records carry the flow id and the condition's result
      if (record.detail && "flowId" in record.detail) {
        text += ` ${String(record.detail.flowId)}`;
        if (record.detail.conditionResult != null) {
          text += ` (condition: ${String(record.detail.conditionResult)})`;
        }
      }
      row.textContent = text;
      panel.appendChild(row);
    }
    return panel;
  }
}
