import type { FormField } from "./types";

// Schema-driven form rendering: the task definition's formFields are the only
// input, so any newly deployed template renders without UI changes.

export interface RenderedForm {
  element: HTMLFormElement;
  /** Current values keyed by field name (checkbox -> boolean). */
  read(): Record<string, unknown>;
  /**
   * Client-side required-field check. Renders inline errors and returns
   * false when any required field is empty; the caller must not submit.
   */
  validate(): boolean;
  /** Show server-side field errors inline (e.g. FormValidation payloads). */
  showErrors(fieldErrors: Record<string, string>): void;
}

function inputFor(field: FormField): HTMLElement {
  if (field.type === "boolean") {
    const input = document.createElement("input");
    input.type = "checkbox";
    input.name = field.name;
    return input;
  }
  if (field.type === "enum") {
    const select = document.createElement("select");
    select.name = field.name;
    const blank = document.createElement("option");
    blank.value = "";
    blank.textContent = "-- select --";
    select.appendChild(blank);
    for (const option of field.options) {
      const el = document.createElement("option");
      el.value = option;
      el.textContent = option;
      select.appendChild(el);
    }
    return select;
  }
  const input = document.createElement("input");
  input.type = "text";
  input.name = field.name;
  return input;
}

export function renderForm(fields: FormField[]): RenderedForm {
  const form = document.createElement("form");
  const errorSpans = new Map<string, HTMLElement>();

  for (const field of fields) {
    const row = document.createElement("div");
    row.className = "form-row";
    const label = document.createElement("label");
    label.textContent = field.required ? `${field.name} *` : field.name;
    const input = inputFor(field);
    const error = document.createElement("span");
    error.className = "field-error";
    error.setAttribute("data-field", field.name);
    errorSpans.set(field.name, error);
    row.append(label, input, error);
    form.appendChild(row);
  }

  const read = (): Record<string, unknown> => {
    const values: Record<string, unknown> = {};
    for (const field of fields) {
      const el = form.elements.namedItem(field.name) as
        | HTMLInputElement
        | HTMLSelectElement;
      values[field.name] =
        field.type === "boolean"
          ? (el as HTMLInputElement).checked
          : el.value;
    }
    return values;
  };

  const clearErrors = () => {
    for (const span of errorSpans.values()) span.textContent = "";
  };

  const showErrors = (fieldErrors: Record<string, string>) => {
    clearErrors();
    for (const [name, message] of Object.entries(fieldErrors)) {
      const span = errorSpans.get(name);
      if (span) span.textContent = message;
    }
  };

  const validate = (): boolean => {
    clearErrors();
    let ok = true;
    const values = read();
    for (const field of fields) {
      if (!field.required) continue;
      const value = values[field.name];
      if (value === "" || value === undefined || value === null) {
        errorSpans.get(field.name)!.textContent = "required";
        ok = false;
      }
    }
    return ok;
  };

  return { element: form, read, validate, showErrors };
}
