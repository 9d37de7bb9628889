export {
  GraphwrightClient,
  ConnectionError,
  ProtocolError,
  DomainRejection,
} from "./client.js";
export type {
  ClientOptions,
  ClientSession,
  Diagnostic,
  RewardBreakdown,
  StepOutcome,
  ValidateOutcome,
  WorkflowDocument,
} from "./client.js";
