// JSON shapes served by the federation's REST listeners. The UI performs no
// domain logic of its own: everything rendered comes from these payloads.

export type FormFieldType = "string" | "boolean" | "enum";

export interface FormField {
  name: string;
  type: FormFieldType;
  required: boolean;
  options: string[]; // enum only
}

export interface Task {
  taskId: string;
  instanceId: string;
  nodeId: string;
  name: string;
  candidateGroup: string;
  formFields: FormField[];
  status: string;
  submittedBy: string | null;
  submittedValues: Record<string, unknown> | null;
}

export interface Instance {
  instanceId: string;
  processKey: string;
  processVersion: number;
  state: "running" | "completed" | "terminated" | "expired";
  variables: Record<string, unknown>;
  currentNodeId: string | null;
  startedAt: string;
  endedAt: string | null;
}

export interface AuditRecord {
  seq: number;
  timestamp: string;
  instanceId: string;
  event: string;
  detail: Record<string, unknown>;
}

export interface Shell {
  id: string;
  assetId: string;
  idShort: string;
  submodelRefs: string[];
  version: number;
  provenance?: { sourceOrgId: string; sourceId: string } | null;
}

export interface ShellDescriptor {
  shellId: string;
  assetId: string;
  orgId: string;
  endpoint: string;
  version: number;
}

export interface SubmodelContribution {
  submodelId: string;
  shadows: string | null;
}

export interface Contribution {
  orgId: string;
  shellId: string;
  submodels: SubmodelContribution[];
}

export interface ConsolidatedView {
  assetId: string;
  partial: boolean;
  contributions: Contribution[];
}

export interface SnapshotCommit {
  commitId: string;
  tag: string | null;
  message: string;
}

export interface OrgEndpoint {
  orgId: string;
  baseUrl: string; // internal listener of that organization
  token?: string;
}

export interface UiConfig {
  user: string;
  orgs: OrgEndpoint[];
}
