/** JSON shapes of the chat-service REST API, as the service emits them. */

export type SessionStatus = "active" | "recommending" | "succeeded" | "failed";

export interface ItemCard {
  item_id: string;
  facets: Record<string, string>;
  rank?: number;
  score?: number;
  rating?: number; // present on visited-history cards
}

export interface HistoryEntry {
  role: "user" | "agent";
  text: string;
  kind?: string;
  facet?: string;
  items?: ItemCard[];
}

export interface SessionDescriptor {
  session_id: string;
  status: SessionStatus;
  policy: string;
  study_mode: boolean;
  seed: number;
  user_id: string;
  turn: number;
  history: HistoryEntry[];
  outcome: string | null;
  tau: number | null;
  target: ItemCard | null;
  shown?: ItemCard[];
  belief?: BeliefPayload;
  visited?: ItemCard[];
}

/** facet name -> value name -> probability */
export type BeliefPayload = Record<string, Record<string, number>>;

export interface DebugPayload {
  belief: BeliefPayload;
  action_probs: number[] | null;
}

export interface QuestionReply {
  kind: "question";
  facet: string;
  text: string;
  status: SessionStatus;
  debug: DebugPayload;
}

export interface RecommendationsReply {
  kind: "recommendations";
  text: string;
  items: ItemCard[];
  status: SessionStatus;
  debug: DebugPayload;
}

export type AgentReply = QuestionReply | RecommendationsReply;

export interface SelectOutcome {
  closed: boolean;
  correct: boolean;
  status: SessionStatus;
  attempts_left?: number;
  outcome?: string;
  tau?: number | null;
  reward?: number;
  turns?: number;
}

export interface Health {
  status: string;
  policy: string;
  checkpoints: Record<string, string>;
  sessions: number;
}

export interface CreateSessionRequest {
  policy?: string;
  study_mode?: boolean;
  seed?: number;
  user_id?: string;
}
