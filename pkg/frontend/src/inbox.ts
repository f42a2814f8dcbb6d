import { ApiClient, ApiError } from "./api";
import { renderForm } from "./form";
import type { Task } from "./types";

// Refresh budget: the inbox must reflect new tasks within 2 s.
export const POLL_INTERVAL_MS = 1500;

/**
 * Task inbox: polls open tasks for the session user, renders each task's
 * form from its formFields schema, and submits completions. A completion
 * is only sent after client-side required-field validation passes.
 */
export class TaskInbox {
  readonly element: HTMLElement;
  private timer: ReturnType<typeof setInterval> | null = null;
  private tasks: Task[] = [];
  private openTaskId: string | null = null;
  private notice = "";
  onChange: (() => void) | null = null; // fired after a successful completion

  constructor(
    private api: ApiClient,
    private user: string,
  ) {
    this.element = document.createElement("section");
    this.element.className = "task-inbox";
    this.render();
  }

  start(): void {
    void this.refresh();
    this.timer = setInterval(() => void this.refresh(), POLL_INTERVAL_MS);
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }

  async refresh(): Promise<void> {
    const { items } = await this.api.listTasks();
    this.tasks = items.filter((t) => t.status === "open");
    if (this.openTaskId && !this.tasks.some((t) => t.taskId === this.openTaskId)) {
      this.openTaskId = null; // someone else completed it
    }
    this.render();
  }

  private render(): void {
    this.element.innerHTML = "";
    const heading = document.createElement("h2");
    heading.textContent = `Inbox (${this.tasks.length})`;
    this.element.appendChild(heading);

    if (this.notice) {
      const banner = document.createElement("p");
      banner.className = "banner";
      banner.textContent = this.notice;
      this.element.appendChild(banner);
    }

    if (this.tasks.length === 0) {
      const empty = document.createElement("p");
      empty.className = "empty-state";
      empty.textContent = "No open tasks.";
      this.element.appendChild(empty);
      return;
    }

    const list = document.createElement("ul");
    list.className = "task-list";
    for (const task of this.tasks) {
      const item = document.createElement("li");
      item.setAttribute("data-task-id", task.taskId);
      const button = document.createElement("button");
      button.textContent = `${task.name} [${task.candidateGroup}]`;
      button.addEventListener("click", () => {
        this.openTaskId = task.taskId;
        this.render();
      });
      item.appendChild(button);
      if (task.taskId === this.openTaskId) item.appendChild(this.taskForm(task));
      list.appendChild(item);
    }
    this.element.appendChild(list);
  }

  private taskForm(task: Task): HTMLElement {
    const panel = document.createElement("div");
    panel.className = "task-form";
    const rendered = renderForm(task.formFields);
    const submit = document.createElement("button");
    submit.type = "submit";
    submit.textContent = "Submit";
    rendered.element.appendChild(submit);

    rendered.element.addEventListener("submit", (event) => {
      event.preventDefault();
      if (!rendered.validate()) return; // invalid: no API call
      void this.api
        .completeTask(task.taskId, this.user, rendered.read())
        .then((instance) => {
          this.notice = `Task completed; instance ${instance.state}.`;
          this.openTaskId = null;
          this.onChange?.();
          return this.refresh();
        })
        .catch((error: unknown) => {
          if (error instanceof ApiError && error.errorType === "FormValidation") {
            rendered.showErrors(error.fieldErrors);
          } else if (error instanceof ApiError && error.status === 409) {
            this.notice = "Already handled by someone else.";
            void this.refresh();
          } else {
            this.notice = `Error: ${(error as Error).message}`;
            this.render();
          }
        });
    });

    panel.append(rendered.element);
    return panel;
  }
}
