import { describe, expect, it } from "vitest";

import { renderForm } from "../src/form";
import type { FormField } from "../src/types";

const DECISION: FormField = {
  name: "decision",
  type: "enum",
  required: true,
  options: ["approve", "reject"],
};

describe("schema-driven form rendering", () => {
  it("renders string, boolean, and enum fields from the schema alone", () => {
    const form = renderForm([
      { name: "comment", type: "string", required: false, options: [] },
      { name: "urgent", type: "boolean", required: false, options: [] },
      DECISION,
    ]);
    const text = form.element.querySelector('input[name="comment"]');
    expect((text as HTMLInputElement).type).toBe("text");
    const checkbox = form.element.querySelector('input[name="urgent"]');
    expect((checkbox as HTMLInputElement).type).toBe("checkbox");
    const select = form.element.querySelector('select[name="decision"]');
    const options = [...(select as HTMLSelectElement).options].map((o) => o.value);
    expect(options).toEqual(["", "approve", "reject"]);
  });

  it("renders a dropdown for a never-seen enum field without code changes", () => {
    // simulates deploying a brand-new template with a novel enum field
    const novel: FormField = {
      name: "escalationLevel",
      type: "enum",
      required: true,
      options: ["p1", "p2", "p3", "defer"],
    };
    const form = renderForm([novel]);
    const select = form.element.querySelector(
      'select[name="escalationLevel"]',
    ) as HTMLSelectElement;
    expect(select).not.toBeNull();
    expect([...select.options].map((o) => o.value)).toEqual([
      "",
      "p1",
      "p2",
      "p3",
      "defer",
    ]);
    (select.options[2] as HTMLOptionElement).selected = true;
    expect(form.read()).toEqual({ escalationLevel: "p2" });
  });

  it("blocks empty required fields with an inline error", () => {
    const form = renderForm([DECISION]);
    expect(form.validate()).toBe(false);
    const error = form.element.querySelector('[data-field="decision"]');
    expect(error?.textContent).toBe("required");
  });

  it("passes validation once the required field is filled", () => {
    const form = renderForm([DECISION]);
    const select = form.element.querySelector("select") as HTMLSelectElement;
    select.value = "approve";
    expect(form.validate()).toBe(true);
    expect(form.element.querySelector('[data-field="decision"]')?.textContent).toBe("");
    expect(form.read()).toEqual({ decision: "approve" });
  });

  it("reads checkbox values as booleans", () => {
    const form = renderForm([
      { name: "urgent", type: "boolean", required: false, options: [] },
    ]);
    expect(form.read()).toEqual({ urgent: false });
    const box = form.element.querySelector("input") as HTMLInputElement;
    box.checked = true;
    expect(form.read()).toEqual({ urgent: true });
  });

  it("shows server-side field errors inline", () => {
    const form = renderForm([DECISION]);
    form.showErrors({ decision: "not one of the allowed options" });
    expect(form.element.querySelector('[data-field="decision"]')?.textContent).toBe(
      "not one of the allowed options",
    );
  });
});
