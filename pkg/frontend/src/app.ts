import { ApiClient } from "./api";
import { FederationBrowser } from "./browser";
import { TaskInbox } from "./inbox";
import { InstanceMonitor } from "./monitor";
import type { UiConfig } from "./types";

/**
 * Single-page operator UI. The first configured organization is "home":
 * its engine serves the inbox and monitor; the browser spans all of them.
 */
export class App {
  readonly element: HTMLElement;
  readonly inbox: TaskInbox;
  readonly monitor: InstanceMonitor;
  readonly browser: FederationBrowser;

  constructor(config: UiConfig) {
    const apis = config.orgs.map((org) => new ApiClient(org));
    this.inbox = new TaskInbox(apis[0], config.user);
    this.monitor = new InstanceMonitor(apis[0]);
    this.browser = new FederationBrowser(apis, config.user);
    // a completed task changes shells and instances: re-fetch both
    this.inbox.onChange = () => {
      void this.monitor.refresh();
      void this.browser.refresh();
    };

    this.element = document.createElement("main");
    const tabs: Array<[string, HTMLElement]> = [
      ["Inbox", this.inbox.element],
      ["Instances", this.monitor.element],
      ["Federation", this.browser.element],
    ];
    const nav = document.createElement("nav");
    for (const [label, section] of tabs) {
      const button = document.createElement("button");
      button.textContent = label;
      button.addEventListener("click", () => {
        for (const [, other] of tabs) other.hidden = other !== section;
      });
      nav.appendChild(button);
    }
    this.element.appendChild(nav);
    for (const [, section] of tabs) this.element.appendChild(section);
  }

  start(): void {
    this.inbox.start();
    void this.monitor.refresh();
    void this.browser.refresh();
  }

  stop(): void {
    this.inbox.stop();
  }
}

/** Browser entry point: fetch /ui/config.json and mount into #app. */
export async function mount(root: HTMLElement): Promise<App> {
  const resp = await fetch("config.json");
  const config = (await resp.json()) as UiConfig;
  const app = new App(config);
  root.appendChild(app.element);
  app.start();
  return app;
}
